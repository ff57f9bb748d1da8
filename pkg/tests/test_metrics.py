"""EER / minDCF tests against an independent brute-force sweep oracle."""

import numpy as np
import pytest

from spkfact.errors import ValidationError
from spkfact.metrics import (
    MetricConfig,
    ScoreReport,
    breakdown_by_condition,
    compute_eer,
    compute_min_dcf,
)


def sweep_oracle(scores, is_target):
    """Naive per-threshold counting; same sweep and interpolation rule,
    implemented with explicit loops."""
    scores = np.asarray(scores, dtype=float)
    is_target = np.asarray(is_target, dtype=bool)
    thresholds = sorted(set(scores.tolist()))
    thresholds.append(thresholds[-1] + 1.0)
    far, frr = [], []
    n_tar = int(is_target.sum())
    n_non = len(scores) - n_tar
    for t in thresholds:
        fa = sum(1 for s, tar in zip(scores, is_target) if not tar and s >= t)
        fr = sum(1 for s, tar in zip(scores, is_target) if tar and s < t)
        far.append(fa / n_non)
        frr.append(fr / n_tar)
    return thresholds, far, frr


def eer_oracle(scores, is_target):
    thresholds, far, frr = sweep_oracle(scores, is_target)
    prev = None
    for i in range(len(thresholds)):
        d = far[i] - frr[i]
        if d <= 0.0:
            if d == 0.0:
                return far[i]
            dp = far[i - 1] - frr[i - 1]
            t = dp / (dp - d)
            return far[i - 1] + t * (far[i] - far[i - 1])
        prev = d
    raise AssertionError("no crossing found")


def min_dcf_oracle(scores, is_target, cfg):
    thresholds, far, frr = sweep_oracle(scores, is_target)
    best = min(
        cfg.c_miss * fr * cfg.p_tar + cfg.c_fa * fa * (1.0 - cfg.p_tar)
        for fa, fr in zip(far, frr)
    )
    return best / min(cfg.c_miss * cfg.p_tar, cfg.c_fa * (1.0 - cfg.p_tar))


class TestComputeEer:
    def test_known_one_third_case(self):
        scores = np.array([0.9, 0.8, 0.4, 0.5, 0.3, 0.2])
        labels = np.array([True, True, True, False, False, False])
        eer, thr = compute_eer(scores, labels)
        assert eer == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert eer == pytest.approx(eer_oracle(scores, labels), abs=1e-15)

    def test_perfect_separation(self):
        scores = np.array([1.0, 0.9, 0.1, 0.2])
        labels = np.array([True, True, False, False])
        assert compute_eer(scores, labels)[0] == 0.0

    def test_inverted_labels_give_eer_one(self):
        scores = np.array([1.0, 0.9, 0.1, 0.2])
        labels = np.array([False, False, True, True])
        assert compute_eer(scores, labels)[0] == pytest.approx(1.0, abs=1e-12)

    def test_all_equal_scores(self):
        scores = np.zeros(6)
        labels = np.array([True, True, True, False, False, False])
        assert compute_eer(scores, labels)[0] == pytest.approx(0.5, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            compute_eer(np.array([0.1, 0.2]), np.array([True, True]))

    def test_matches_oracle_on_random_sets(self):
        rng = np.random.default_rng(1001)
        for _ in range(1000):
            n = int(rng.integers(4, 200))
            scores = np.round(rng.standard_normal(n), int(rng.integers(1, 12)))
            labels = rng.random(n) < rng.uniform(0.2, 0.8)
            if labels.all() or not labels.any():
                labels[0] = not labels[0]
            eer, _ = compute_eer(scores, labels)
            assert eer == pytest.approx(eer_oracle(scores, labels), abs=1e-12)

    def test_invariant_under_monotone_transforms(self):
        rng = np.random.default_rng(77)
        for _ in range(200):
            n = int(rng.integers(6, 80))
            scores = rng.standard_normal(n)
            labels = rng.random(n) < 0.5
            if labels.all() or not labels.any():
                labels[0] = not labels[0]
            base, _ = compute_eer(scores, labels)
            affine, _ = compute_eer(2.0 * scores + 1.0, labels)
            squashed, _ = compute_eer(np.tanh(scores), labels)
            assert affine == pytest.approx(base, abs=1e-12)
            assert squashed == pytest.approx(base, abs=1e-12)

    def test_threshold_sits_at_crossing(self):
        rng = np.random.default_rng(5)
        scores = rng.standard_normal(60)
        labels = rng.random(60) < 0.5
        labels[0], labels[1] = True, False
        eer, thr = compute_eer(scores, labels)
        far = np.mean(scores[~labels] >= thr)
        frr = np.mean(scores[labels] < thr)
        # The crossing threshold keeps both rates within one trial of the EER.
        assert abs(far - eer) <= 1.0 / max(1, (~labels).sum())
        assert abs(frr - eer) <= 1.0 / max(1, labels.sum())


class TestMinDcf:
    def test_perfect_separation_zero(self):
        scores = np.array([1.0, 0.9, 0.1, 0.2])
        labels = np.array([True, True, False, False])
        assert compute_min_dcf(scores, labels)[0] == 0.0

    def test_all_equal_scores_normalized_one(self):
        scores = np.zeros(6)
        labels = np.array([True, True, True, False, False, False])
        assert compute_min_dcf(scores, labels)[0] == pytest.approx(1.0, abs=1e-12)

    def test_matches_oracle_on_random_sets(self):
        rng = np.random.default_rng(2002)
        cfg = MetricConfig()
        for _ in range(1000):
            n = int(rng.integers(4, 200))
            scores = np.round(rng.standard_normal(n), int(rng.integers(1, 12)))
            labels = rng.random(n) < rng.uniform(0.2, 0.8)
            if labels.all() or not labels.any():
                labels[0] = not labels[0]
            dcf, _ = compute_min_dcf(scores, labels, cfg)
            assert dcf == pytest.approx(min_dcf_oracle(scores, labels, cfg), abs=1e-12)

    def test_cost_config_validation(self):
        with pytest.raises(ValidationError):
            MetricConfig(p_tar=0.0).validate()
        with pytest.raises(ValidationError):
            MetricConfig(c_miss=-1.0).validate()


class TestBreakdown:
    def test_two_type_breakdown_equals_direct_eer(self):
        rng = np.random.default_rng(10)
        conditions = np.array(["TC"] * 20 + ["IC"] * 30)
        scores = np.concatenate([rng.normal(1.0, 0.5, 20), rng.normal(0.0, 0.5, 30)])
        out = breakdown_by_condition(conditions, scores)
        assert set(out) == {"IC"}
        direct, _ = compute_eer(scores, conditions == "TC")
        assert out["IC"] == pytest.approx(direct, abs=1e-15)

    def test_constructed_separation_ranks_tw_worst(self):
        rng = np.random.default_rng(11)
        conditions = np.array(["TC"] * 30 + ["TW"] * 30 + ["IC"] * 30 + ["IW"] * 30)
        scores = np.concatenate(
            [
                rng.normal(1.0, 0.3, 30),
                rng.normal(0.9, 0.3, 30),  # TW nearly indistinguishable from TC
                rng.normal(-1.0, 0.3, 30),
                rng.normal(-1.2, 0.3, 30),
            ]
        )
        out = breakdown_by_condition(conditions, scores)
        assert out["TW"] > out["IC"] and out["TW"] > out["IW"]

    def test_per_type_eers_match_subset_oracle(self):
        rng = np.random.default_rng(12)
        conditions = np.array(["TC"] * 25 + ["TW"] * 25 + ["IC"] * 25 + ["IW"] * 25)
        scores = rng.standard_normal(100)
        out = breakdown_by_condition(conditions, scores)
        for kind in ("TW", "IC", "IW"):
            mask = (conditions == "TC") | (conditions == kind)
            assert out[kind] == pytest.approx(
                eer_oracle(scores[mask], (conditions == "TC")[mask]), abs=1e-12
            )

    def test_missing_type_omitted(self):
        conditions = np.array(["TC", "TC", "IC", "IC"])
        scores = np.array([1.0, 0.9, 0.2, 0.1])
        out = breakdown_by_condition(conditions, scores)
        assert "TW" not in out and "IW" not in out

    def test_no_tc_rejected(self):
        with pytest.raises(ValueError):
            breakdown_by_condition(np.array(["IC", "IW"]), np.array([0.1, 0.2]))


class TestScoreReport:
    def test_validation(self):
        with pytest.raises(ValidationError):
            ScoreReport(eer=1.5, min_dcf=0.2, breakdown={}, n_trials={})
        with pytest.raises(ValidationError):
            ScoreReport(eer=0.5, min_dcf=-0.2, breakdown={}, n_trials={})

    def test_json_dict_is_sorted(self):
        rep = ScoreReport(
            eer=0.1, min_dcf=0.2, breakdown={"TW": 0.3, "IC": 0.1}, n_trials={"TW": 5, "TC": 2}
        )
        d = rep.to_json_dict()
        assert list(d["breakdown"]) == ["IC", "TW"]
        assert list(d["n_trials"]) == ["TC", "TW"]
