"""Trial-list generation and file-format tests."""

import numpy as np
import pytest

from spkfact.corpus import CorpusConfig, generate_corpus
from spkfact.errors import FormatError, ValidationError
from spkfact.trials import (
    Trial,
    generate_trials_condition1,
    generate_trials_condition2,
    read_scores,
    read_trial_list,
    read_trials,
    text_independent_view,
    write_enrollments,
    write_scores,
    write_trials,
)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(
        CorpusConfig(
            n_speakers=4,
            n_phrases=3,
            n_dev_speakers=3,
            n_eval_speakers=4,
            n_eval_phrases=5,
            eval_repeats=9,
            eval_enroll_repeats=3,
            dev_repeats=4,
            phones_per_phrase=(4, 6),
            frames_per_phone=(3, 5),
            seed=77,
        )
    )


def brute_force_candidates(corpus):
    """Every possible (model, test) pair per condition type, by enumeration."""
    eval_utts = corpus.split("eval")
    enroll_per = corpus.config.eval_enroll_repeats
    groups = {}
    for u in eval_utts:
        groups.setdefault((u.speaker_id, u.phrase_id), []).append(u.utt_id)
    for key in groups:
        groups[key].sort()
    tests = {key: ids[enroll_per:] for key, ids in groups.items()}
    out = {"TC": set(), "TW": set(), "IC": set(), "IW": set()}
    for (spk, phr) in groups:
        model = f"s{spk:04d}_p{phr:03d}"
        for (spk2, phr2), ids in tests.items():
            kind = (
                "TC"
                if (spk2 == spk and phr2 == phr)
                else "TW"
                if spk2 == spk
                else "IC"
                if phr2 == phr
                else "IW"
            )
            out[kind].update((model, u) for u in ids)
    return out


class TestCondition1:
    def test_exact_ratio_counts_1333(self, corpus):
        tl = generate_trials_condition1(corpus, ratios=(1, 3, 3, 3), seed=5)
        counts = tl.counts()
        n_models = 4 * 5
        n_tc = n_models * 6
        assert counts == {"TC": n_tc, "TW": 3 * n_tc, "IC": 3 * n_tc, "IW": 3 * n_tc}

    def test_equal_ratio_counts_match_enumeration(self, corpus):
        tl = generate_trials_condition1(corpus, ratios=(1, 1, 1, 1), seed=5)
        counts = tl.counts()
        n_tc = 4 * 5 * 6
        assert all(counts[k] == n_tc for k in ("TC", "TW", "IC", "IW"))
        candidates = brute_force_candidates(corpus)
        assert counts["TC"] == len(candidates["TC"])  # every TC kept
        for t in tl.trials:
            assert (t.model_id, t.test_utt_id) in candidates[t.condition]

    def test_two_by_two_by_nine_consumes_every_pool(self):
        # 2 speakers x 2 phrases x 9 repeats: every candidate pool holds
        # exactly 24 pairs, so a 1:1:1:1 list is forced to enumerate them all.
        tiny = generate_corpus(
            CorpusConfig(
                n_speakers=3,
                n_phrases=2,
                n_dev_speakers=2,
                n_eval_speakers=2,
                n_eval_phrases=2,
                eval_repeats=9,
                phones_per_phrase=(4, 6),
                frames_per_phone=(3, 5),
                seed=13,
            )
        )
        tl = generate_trials_condition1(tiny, ratios=(1, 1, 1, 1), seed=0)
        assert tl.counts() == {"TC": 24, "TW": 24, "IC": 24, "IW": 24}
        candidates = brute_force_candidates(tiny)
        for kind in ("TC", "TW", "IC", "IW"):
            got = {(t.model_id, t.test_utt_id) for t in tl.trials if t.condition == kind}
            assert got == candidates[kind]

    def test_labels_follow_condition(self, corpus):
        tl = generate_trials_condition1(corpus, seed=5)
        for t in tl.trials:
            assert t.is_target == (t.condition == "TC")

    def test_no_duplicates_and_no_enrollment_leakage(self, corpus):
        tl = generate_trials_condition1(corpus, seed=5)
        pairs = [(t.model_id, t.test_utt_id) for t in tl.trials]
        assert len(pairs) == len(set(pairs))
        enrolled = {u for spec in tl.enrollments.values() for u in spec.utt_ids}
        assert not enrolled & {t.test_utt_id for t in tl.trials}

    def test_determinism(self, corpus):
        a = generate_trials_condition1(corpus, seed=9)
        b = generate_trials_condition1(corpus, seed=9)
        assert a.trials == b.trials
        c = generate_trials_condition1(corpus, seed=10)
        assert a.trials != c.trials

    def test_unachievable_ratio_reports_maximum(self, corpus):
        with pytest.raises(ValidationError, match="achievable maximum"):
            generate_trials_condition1(corpus, ratios=(1, 50, 50, 50), seed=5)

    def test_enrollment_uses_designated_repeats(self, corpus):
        tl = generate_trials_condition1(corpus, seed=5)
        for spec in tl.enrollments.values():
            assert len(spec.utt_ids) == corpus.config.eval_enroll_repeats
            assert all(u.endswith(("_u00", "_u01", "_u02")) for u in spec.utt_ids)


class TestCondition2:
    def test_ratio_counts_equal(self, corpus):
        target = corpus.phrases("eval")[0]
        tl = generate_trials_condition2(corpus, target, "text_dependent", seed=3)
        counts = tl.counts()
        n_tc = 4 * 6
        assert all(counts[k] == n_tc for k in ("TC", "TW", "IC", "IW"))

    def test_text_dependent_enrollment_avoids_target_and_test_phrases(self, corpus):
        target = corpus.phrases("eval")[1]
        tl = generate_trials_condition2(corpus, target, "text_dependent", seed=3)
        by_id = {u.utt_id: u for u in corpus.utterances}
        test_phrases_by_model = {}
        for t in tl.trials:
            test_phrases_by_model.setdefault(t.model_id, set()).add(
                by_id[t.test_utt_id].phrase_id
            )
        for spec in tl.enrollments.values():
            phrases = {by_id[u].phrase_id for u in spec.utt_ids}
            assert len(phrases) == 1  # one shared text
            assert target not in phrases
            assert not phrases & test_phrases_by_model[spec.model_id]

    def test_text_independent_enrollment_uses_three_phrases(self, corpus):
        target = corpus.phrases("eval")[2]
        tl = generate_trials_condition2(corpus, target, "text_independent", seed=3)
        by_id = {u.utt_id: u for u in corpus.utterances}
        for spec in tl.enrollments.values():
            phrases = {by_id[u].phrase_id for u in spec.utt_ids}
            assert len(phrases) == 3
            assert target not in phrases

    def test_adaptation_ids_come_from_dev_split_of_target_phrase(self, corpus):
        target = corpus.phrases("eval")[0]
        tl = generate_trials_condition2(corpus, target, "text_dependent", seed=3)
        assert len(tl.adaptation_utt_ids) == 10
        by_id = {u.utt_id: u for u in corpus.utterances}
        eval_speakers = set(corpus.speakers("eval"))
        for utt_id in tl.adaptation_utt_ids:
            utt = by_id[utt_id]
            assert utt.split == "dev"
            assert utt.phrase_id == target
            assert utt.speaker_id not in eval_speakers

    def test_content_correctness_is_relative_to_target_phrase(self, corpus):
        target = corpus.phrases("eval")[3]
        tl = generate_trials_condition2(corpus, target, "text_independent", seed=4)
        by_id = {u.utt_id: u for u in corpus.utterances}
        for t in tl.trials:
            utt = by_id[t.test_utt_id]
            model_speaker = tl.enrollments[t.model_id].speaker_id
            expected = {
                ("TC"): (utt.speaker_id == model_speaker and utt.phrase_id == target),
                ("TW"): (utt.speaker_id == model_speaker and utt.phrase_id != target),
                ("IC"): (utt.speaker_id != model_speaker and utt.phrase_id == target),
                ("IW"): (utt.speaker_id != model_speaker and utt.phrase_id != target),
            }[t.condition]
            assert expected

    def test_insufficient_dev_utterances_rejected(self, corpus):
        target = corpus.phrases("eval")[0]
        with pytest.raises(ValidationError, match="adaptation"):
            generate_trials_condition2(corpus, target, "text_dependent", seed=3, n_adaptation=99)

    def test_unknown_phrase_or_mode_rejected(self, corpus):
        with pytest.raises(ValidationError):
            generate_trials_condition2(corpus, 999, "text_dependent", seed=3)
        with pytest.raises(ValidationError):
            generate_trials_condition2(corpus, corpus.phrases("eval")[0], "both", seed=3)

    def test_determinism(self, corpus):
        target = corpus.phrases("eval")[0]
        a = generate_trials_condition2(corpus, target, "text_independent", seed=8)
        b = generate_trials_condition2(corpus, target, "text_independent", seed=8)
        assert a.trials == b.trials and a.adaptation_utt_ids == b.adaptation_utt_ids


class TestTextIndependentView:
    def test_tw_becomes_target(self):
        trials = [
            Trial("m", "u1", True, "TC"),
            Trial("m", "u2", False, "TW"),
            Trial("m", "u3", False, "IC"),
            Trial("m", "u4", False, "IW"),
        ]
        view = text_independent_view(trials)
        assert [t.is_target for t in view] == [True, True, False, False]
        assert [t.condition for t in view] == ["TC", "TW", "IC", "IW"]


class TestFiles:
    def test_trial_round_trip(self, corpus, tmp_path):
        tl = generate_trials_condition2(
            corpus, corpus.phrases("eval")[0], "text_independent", seed=3
        )
        write_trials(tl, tmp_path / "x.trials.txt")
        write_enrollments(tl, tmp_path / "x.enroll.json")
        loaded = read_trial_list(tmp_path / "x.trials.txt", tmp_path / "x.enroll.json")
        assert loaded.trials == tl.trials
        assert loaded.condition == 2
        assert loaded.target_phrase == tl.target_phrase
        assert loaded.adaptation_utt_ids == tl.adaptation_utt_ids
        assert set(loaded.enrollments) == set(tl.enrollments)
        for k in tl.enrollments:
            assert loaded.enrollments[k].utt_ids == tl.enrollments[k].utt_ids

    def test_malformed_trial_line_rejected(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("model utt target\n")
        with pytest.raises(FormatError, match="bad.txt:1"):
            read_trials(p)
        p.write_text("model utt maybe TC\n")
        with pytest.raises(FormatError):
            read_trials(p)

    def test_score_round_trip_preserves_floats(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [(f"m{i}", f"u{i}", float(rng.standard_normal())) for i in range(50)]
        write_scores(rows, tmp_path / "s.txt")
        loaded = read_scores(tmp_path / "s.txt")
        for m, u, s in rows:
            assert loaded[(m, u)] == s

    def test_bad_score_line_rejected(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("m u notafloat\n")
        with pytest.raises(FormatError):
            read_scores(p)

    def test_missing_enrollment_entry_rejected(self, corpus, tmp_path):
        tl = generate_trials_condition1(corpus, seed=5)
        write_trials(tl, tmp_path / "t.txt")
        doc_tl = generate_trials_condition1(corpus, seed=5)
        doc_tl.enrollments.pop(next(iter(doc_tl.enrollments)))
        write_enrollments(doc_tl, tmp_path / "e.json")
        with pytest.raises(FormatError, match="no enrollment entry"):
            read_trial_list(tmp_path / "t.txt", tmp_path / "e.json")
