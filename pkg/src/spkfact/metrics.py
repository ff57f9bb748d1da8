"""Detection metrics: equal error rate and minimum detection cost.

Both metrics sweep thresholds over every distinct score plus one sentinel
above the maximum (the reject-all operating point).  A trial is accepted
when its score is >= the threshold, so FAR(t) is the fraction of
non-targets at or above t and FRR(t) the fraction of targets below t.

The EER is read at the first sweep point where FAR - FRR becomes <= 0; if
it is exactly zero there, EER = FAR at that point, otherwise FAR and FRR
are interpolated linearly between the two surrounding sweep points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class MetricConfig:
    p_tar: float = 0.01
    c_miss: float = 1.0
    c_fa: float = 1.0

    def validate(self) -> None:
        if not 0.0 < self.p_tar < 1.0:
            raise ValidationError(f"p_tar must lie in (0, 1), got {self.p_tar}")
        if self.c_miss <= 0 or self.c_fa <= 0:
            raise ValidationError("detection costs must be positive")

    def to_json_dict(self) -> dict:
        return {"p_tar": self.p_tar, "c_miss": self.c_miss, "c_fa": self.c_fa}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown metric config fields: {sorted(unknown)}")
        return cls(**d)


def _check_scores(scores, is_target):
    scores = np.asarray(scores, dtype=np.float64)
    is_target = np.asarray(is_target, dtype=bool)
    if scores.shape != is_target.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be matching 1-D arrays")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    n_tar = int(is_target.sum())
    if n_tar == 0 or n_tar == len(is_target):
        raise ValueError("need at least one target and one non-target trial")
    return scores, is_target


def detection_sweep(scores, is_target):
    """FAR and FRR at every distinct score plus a reject-all sentinel.

    Returns (thresholds, far, frr), all ascending in threshold.
    """
    scores, is_target = _check_scores(scores, is_target)
    targets = np.sort(scores[is_target])
    nontargets = np.sort(scores[~is_target])
    thresholds = np.unique(scores)
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    far = (len(nontargets) - np.searchsorted(nontargets, thresholds, side="left")) / len(
        nontargets
    )
    frr = np.searchsorted(targets, thresholds, side="left") / len(targets)
    return thresholds, far, frr


def compute_eer(scores, is_target) -> tuple[float, float]:
    """Equal error rate and the threshold where FAR and FRR cross."""
    thresholds, far, frr = detection_sweep(scores, is_target)
    diff = far - frr
    idx = int(np.argmax(diff <= 0.0))  # first sweep point at or past the crossing
    if diff[idx] == 0.0:
        return float(far[idx]), float(thresholds[idx])
    t = diff[idx - 1] / (diff[idx - 1] - diff[idx])
    eer = far[idx - 1] + t * (far[idx] - far[idx - 1])
    threshold = thresholds[idx - 1] + t * (thresholds[idx] - thresholds[idx - 1])
    return float(eer), float(threshold)


def compute_min_dcf(scores, is_target, config: MetricConfig = MetricConfig()) -> tuple[float, float]:
    """Minimum normalized detection cost over the sweep and its threshold."""
    config.validate()
    thresholds, far, frr = detection_sweep(scores, is_target)
    dcf = config.c_miss * frr * config.p_tar + config.c_fa * far * (1.0 - config.p_tar)
    idx = int(np.argmin(dcf))
    norm = min(config.c_miss * config.p_tar, config.c_fa * (1.0 - config.p_tar))
    return float(dcf[idx] / norm), float(thresholds[idx])


def breakdown_by_condition(conditions, scores) -> dict[str, float]:
    """EER per non-target condition, each measured against the TC trials.

    ``conditions`` holds one of TC/TW/IC/IW per trial.  Types with no trials
    are omitted from the result.
    """
    conditions = np.asarray(conditions)
    scores = np.asarray(scores, dtype=np.float64)
    if conditions.shape != scores.shape:
        raise ValueError("conditions and scores must align")
    tc_mask = conditions == "TC"
    if not tc_mask.any():
        raise ValueError("breakdown needs TC trials as the target side")
    out: dict[str, float] = {}
    for kind in ("TW", "IC", "IW"):
        mask = conditions == kind
        if not mask.any():
            continue
        subset = tc_mask | mask
        eer, _ = compute_eer(scores[subset], tc_mask[subset])
        out[kind] = eer
    return out


@dataclass
class ScoreReport:
    """Headline metrics plus the per-condition error breakdown."""

    eer: float
    min_dcf: float
    breakdown: dict[str, float]
    n_trials: dict[str, int]
    eer_threshold: float = 0.0
    dcf_threshold: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.eer <= 1.0:
            raise ValidationError(f"EER {self.eer} outside [0, 1]")
        if self.min_dcf < 0.0:
            raise ValidationError(f"minDCF {self.min_dcf} negative")

    def to_json_dict(self) -> dict:
        return {
            "eer": self.eer,
            "min_dcf": self.min_dcf,
            "breakdown": dict(sorted(self.breakdown.items())),
            "n_trials": dict(sorted(self.n_trials.items())),
        }
