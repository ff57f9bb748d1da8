"""Trial-list generation for both text-mismatch conditions, plus file I/O.

Trial taxonomy (content correctness is judged against the phrase the
enrollment claims, i.e. the enrolled phrase in condition 1 and the target
phrase in condition 2):

* TC -- target speaker, correct content
* TW -- target speaker, wrong content
* IC -- impostor, correct content
* IW -- impostor, wrong content

Condition 1 (training/evaluation text mismatch only): one enrollment model
per (speaker, phrase) built from the enrollment-designated repeats; every
TC trial is kept and the TW/IC/IW pools are subsampled without replacement
to exact multiples of the TC count.

Condition 2 (enrollment/test mismatch): one model per speaker, enrolled on
phrases other than the target phrase (one shared phrase in text_dependent
mode, three distinct phrases in text_independent mode).  In text_dependent
mode the wrong-content trials never reuse the model's enrollment phrase,
so enrollment and test texts stay disjoint per model; text_independent
mode imposes no such exclusion.  The generator also returns adaptation
utterances of the target phrase drawn from the dev split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, Utterance, repeat_index
from .errors import FormatError, ValidationError

CONDITION_TYPES = ("TC", "TW", "IC", "IW")
ENROLLMENT_MODES = ("text_dependent", "text_independent")


@dataclass(frozen=True)
class Trial:
    model_id: str
    test_utt_id: str
    is_target: bool
    condition: str

    def __post_init__(self) -> None:
        if self.condition not in CONDITION_TYPES:
            raise ValidationError(f"unknown trial condition {self.condition!r}")


@dataclass
class EnrollmentSpec:
    """Which utterances enroll one model (embeddings are computed at scoring time)."""

    model_id: str
    speaker_id: int
    utt_ids: tuple[str, ...]
    enrollment_mode: str

    def __post_init__(self) -> None:
        if not self.utt_ids:
            raise ValidationError(f"{self.model_id}: empty enrollment utterance list")
        if self.enrollment_mode not in ENROLLMENT_MODES:
            raise ValidationError(f"unknown enrollment mode {self.enrollment_mode!r}")


@dataclass
class TrialList:
    trials: list[Trial]
    enrollments: dict[str, EnrollmentSpec]
    condition: int
    target_phrase: int | None = None
    enrollment_mode: str | None = None
    adaptation_utt_ids: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def counts(self) -> dict[str, int]:
        out = {kind: 0 for kind in CONDITION_TYPES}
        for t in self.trials:
            out[t.condition] += 1
        return out


def _eval_groups(corpus: Corpus):
    """Eval utterances grouped by (speaker, phrase), each sorted by repeat."""
    groups: dict[tuple[int, int], list[Utterance]] = {}
    for utt in corpus.split("eval"):
        groups.setdefault((utt.speaker_id, utt.phrase_id), []).append(utt)
    for key in groups:
        groups[key].sort(key=lambda u: repeat_index(u.utt_id))
    return groups


def _enroll_test_split(group: list[Utterance], n_enroll: int):
    return group[:n_enroll], group[n_enroll:]


def _ratio_counts(n_tc: int, ratios) -> dict[str, int]:
    ratios = tuple(int(r) for r in ratios)
    if len(ratios) != 4 or any(r < 1 for r in ratios):
        raise ValidationError(f"ratios must be four positive integers, got {ratios}")
    counts = {}
    for kind, r in zip(CONDITION_TYPES, ratios):
        total = n_tc * r
        if total % ratios[0] != 0:
            raise ValidationError(
                f"{kind} ratio {r}:{ratios[0]} does not divide the {n_tc} TC trials evenly"
            )
        counts[kind] = total // ratios[0]
    return counts


def _subsample(pool: list[tuple[str, str]], k: int, kind: str, rng) -> list[tuple[str, str]]:
    if len(pool) < k:
        raise ValidationError(
            f"cannot draw {k} {kind} trials; the achievable maximum is {len(pool)}"
        )
    if len(pool) == k:
        return list(pool)
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in sorted(idx)]


def generate_trials_condition1(corpus: Corpus, ratios=(1, 3, 3, 3), seed=0) -> TrialList:
    """Text-dependent trial list with the TC:TW:IC:IW counts fixed by ``ratios``."""
    groups = _eval_groups(corpus)
    speakers = sorted({s for s, _ in groups})
    phrases = sorted({p for _, p in groups})
    if len(speakers) < 2 or len(phrases) < 2:
        raise ValidationError("condition-1 trials need at least 2 eval speakers and 2 phrases")
    n_enroll = corpus.config.eval_enroll_repeats
    rng = np.random.default_rng(seed)

    enrollments: dict[str, EnrollmentSpec] = {}
    test_utts: dict[tuple[int, int], list[str]] = {}
    for (speaker, phrase), group in sorted(groups.items()):
        enroll, test = _enroll_test_split(group, n_enroll)
        if not enroll or not test:
            raise ValidationError(
                f"speaker {speaker} phrase {phrase} lacks enrollment or test repeats"
            )
        model_id = f"s{speaker:04d}_p{phrase:03d}"
        enrollments[model_id] = EnrollmentSpec(
            model_id=model_id,
            speaker_id=speaker,
            utt_ids=tuple(u.utt_id for u in enroll),
            enrollment_mode="text_dependent",
        )
        test_utts[(speaker, phrase)] = [u.utt_id for u in test]

    tc: list[tuple[str, str]] = []
    pools: dict[str, list[tuple[str, str]]] = {"TW": [], "IC": [], "IW": []}
    for (speaker, phrase), model_group in sorted(test_utts.items()):
        model_id = f"s{speaker:04d}_p{phrase:03d}"
        for (spk2, phr2), utt_ids in sorted(test_utts.items()):
            same_spk, same_phr = spk2 == speaker, phr2 == phrase
            kind = {
                (True, True): "TC",
                (True, False): "TW",
                (False, True): "IC",
                (False, False): "IW",
            }[(same_spk, same_phr)]
            pairs = [(model_id, u) for u in utt_ids]
            if kind == "TC":
                tc.extend(pairs)
            else:
                pools[kind].extend(pairs)

    counts = _ratio_counts(len(tc), ratios)
    trials = [Trial(m, u, True, "TC") for m, u in tc]
    for kind in ("TW", "IC", "IW"):
        chosen = _subsample(pools[kind], counts[kind], kind, rng)
        trials.extend(Trial(m, u, False, kind) for m, u in chosen)
    return TrialList(
        trials=trials,
        enrollments=enrollments,
        condition=1,
        metadata={"ratios": list(ratios), "seed": int(seed)},
    )


def generate_trials_condition2(
    corpus: Corpus,
    target_phrase: int,
    enrollment_mode: str,
    seed=0,
    ratios=(1, 1, 1, 1),
    n_adaptation: int = 10,
) -> TrialList:
    """Enrollment/test text-mismatch trial list for one target phrase.

    Returns a TrialList whose ``adaptation_utt_ids`` are dev-split
    utterances of the target phrase (for computing the adaptation text
    embedding).
    """
    if enrollment_mode not in ENROLLMENT_MODES:
        raise ValidationError(f"unknown enrollment mode {enrollment_mode!r}")
    groups = _eval_groups(corpus)
    speakers = sorted({s for s, _ in groups})
    phrases = sorted({p for _, p in groups})
    if target_phrase not in phrases:
        raise ValidationError(f"target phrase {target_phrase} is not an eval phrase")
    if len(speakers) < 2 or len(phrases) < 4:
        raise ValidationError(
            "condition-2 trials need at least 2 eval speakers and 4 eval phrases"
        )
    dev_candidates = sorted(
        u.utt_id for u in corpus.split("dev") if u.phrase_id == target_phrase
    )
    if len(dev_candidates) < n_adaptation:
        raise ValidationError(
            f"dev split has {len(dev_candidates)} utterances of phrase {target_phrase}; "
            f"{n_adaptation} needed for adaptation"
        )
    n_enroll = corpus.config.eval_enroll_repeats
    rng = np.random.default_rng(seed)

    enrollments: dict[str, EnrollmentSpec] = {}
    enrolled_phrases: dict[str, set[int]] = {}
    other_phrases = [p for p in phrases if p != target_phrase]
    for speaker in speakers:
        model_id = f"s{speaker:04d}"
        if enrollment_mode == "text_dependent":
            phrase = int(other_phrases[rng.integers(len(other_phrases))])
            enroll_group = groups[(speaker, phrase)][:n_enroll]
            utt_ids = tuple(u.utt_id for u in enroll_group)
            chosen = {phrase}
        else:
            k = min(3, len(other_phrases))
            picks = rng.choice(len(other_phrases), size=k, replace=False)
            chosen = {int(other_phrases[i]) for i in picks}
            utt_ids = []
            for phrase in sorted(chosen):
                enroll_group = groups[(speaker, phrase)][:n_enroll]
                utt_ids.append(enroll_group[int(rng.integers(len(enroll_group)))].utt_id)
            utt_ids = tuple(utt_ids)
        enrollments[model_id] = EnrollmentSpec(
            model_id=model_id,
            speaker_id=speaker,
            utt_ids=utt_ids,
            enrollment_mode=enrollment_mode,
        )
        enrolled_phrases[model_id] = chosen

    test_by_group: dict[tuple[int, int], list[str]] = {}
    for (speaker, phrase), group in sorted(groups.items()):
        _, test = _enroll_test_split(group, n_enroll)
        test_by_group[(speaker, phrase)] = [u.utt_id for u in test]

    tc: list[tuple[str, str]] = []
    pools: dict[str, list[tuple[str, str]]] = {"TW": [], "IC": [], "IW": []}
    for speaker in speakers:
        model_id = f"s{speaker:04d}"
        excluded = {target_phrase}
        if enrollment_mode == "text_dependent":
            excluded |= enrolled_phrases[model_id]
        for (spk2, phr2), utt_ids in sorted(test_by_group.items()):
            pairs = [(model_id, u) for u in utt_ids]
            if phr2 == target_phrase:
                (tc if spk2 == speaker else pools["IC"]).extend(pairs)
            elif phr2 not in excluded:
                pools["TW" if spk2 == speaker else "IW"].extend(pairs)

    counts = _ratio_counts(len(tc), ratios)
    trials = [Trial(m, u, True, "TC") for m, u in tc]
    for kind in ("TW", "IC", "IW"):
        chosen = _subsample(pools[kind], counts[kind], kind, rng)
        trials.extend(Trial(m, u, False, kind) for m, u in chosen)

    adaptation = rng.choice(len(dev_candidates), size=n_adaptation, replace=False)
    return TrialList(
        trials=trials,
        enrollments=enrollments,
        condition=2,
        target_phrase=int(target_phrase),
        enrollment_mode=enrollment_mode,
        adaptation_utt_ids=tuple(dev_candidates[i] for i in sorted(adaptation)),
        metadata={"ratios": list(ratios), "seed": int(seed), "n_adaptation": n_adaptation},
    )


def text_independent_view(trials: list[Trial]) -> list[Trial]:
    """Relabel TW trials as targets (same speaker, content ignored)."""
    return [
        Trial(t.model_id, t.test_utt_id, t.is_target or t.condition == "TW", t.condition)
        for t in trials
    ]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
# Trial file: one line per trial, "model_id test_utt_id target|nontarget TYPE".
# Enrollment sidecar: JSON with the per-model utterance lists and, for
# condition 2, the target phrase and adaptation utterance ids.


def write_trials(trial_list: TrialList, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for t in trial_list.trials:
            label = "target" if t.is_target else "nontarget"
            fh.write(f"{t.model_id} {t.test_utt_id} {label} {t.condition}\n")
    return path


def read_trials(path) -> list[Trial]:
    path = Path(path)
    trials = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4 or parts[2] not in ("target", "nontarget"):
            raise FormatError(f"{path}:{lineno}: malformed trial line {line!r}")
        if parts[3] not in CONDITION_TYPES:
            raise FormatError(f"{path}:{lineno}: unknown condition {parts[3]!r}")
        trials.append(Trial(parts[0], parts[1], parts[2] == "target", parts[3]))
    if not trials:
        raise FormatError(f"{path}: no trials found")
    return trials


def write_enrollments(trial_list: TrialList, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "condition": trial_list.condition,
        "target_phrase": trial_list.target_phrase,
        "enrollment_mode": trial_list.enrollment_mode,
        "adaptation_utt_ids": list(trial_list.adaptation_utt_ids),
        "metadata": trial_list.metadata,
        "models": [
            {
                "model_id": spec.model_id,
                "speaker_id": spec.speaker_id,
                "utt_ids": list(spec.utt_ids),
                "enrollment_mode": spec.enrollment_mode,
            }
            for spec in trial_list.enrollments.values()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_trial_list(trials_path, enroll_path) -> TrialList:
    """Assemble a TrialList from a trial file plus its enrollment sidecar."""
    trials = read_trials(trials_path)
    enroll_path = Path(enroll_path)
    try:
        doc = json.loads(enroll_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"{enroll_path}: enrollment sidecar missing")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{enroll_path}: invalid JSON ({exc})") from exc
    enrollments = {}
    for m in doc["models"]:
        spec = EnrollmentSpec(
            model_id=m["model_id"],
            speaker_id=int(m["speaker_id"]),
            utt_ids=tuple(m["utt_ids"]),
            enrollment_mode=m["enrollment_mode"],
        )
        enrollments[spec.model_id] = spec
    missing = {t.model_id for t in trials} - set(enrollments)
    if missing:
        raise FormatError(f"{enroll_path}: no enrollment entry for models {sorted(missing)[:3]}")
    return TrialList(
        trials=trials,
        enrollments=enrollments,
        condition=int(doc["condition"]),
        target_phrase=doc.get("target_phrase"),
        enrollment_mode=doc.get("enrollment_mode"),
        adaptation_utt_ids=tuple(doc.get("adaptation_utt_ids", ())),
        metadata=doc.get("metadata", {}),
    )


def write_scores(rows, path) -> Path:
    """Write "model_id test_utt_id score" lines; scores keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for model_id, utt_id, score in rows:
            fh.write(f"{model_id} {utt_id} {score!r}\n")
    return path


def read_scores(path) -> dict[tuple[str, str], float]:
    path = Path(path)
    scores: dict[tuple[str, str], float] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: malformed score line {line!r}")
        try:
            scores[(parts[0], parts[1])] = float(parts[2])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad score value {parts[2]!r}")
    if not scores:
        raise FormatError(f"{path}: no scores found")
    return scores
