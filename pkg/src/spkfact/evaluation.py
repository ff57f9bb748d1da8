"""Embedding extraction, enrollment, text adaptation, and trial scoring.

Scoring modes
-------------
* ``spk``            -- speaker embedding alone (works for both models).
* ``spk_text``       -- combined embedding, each utterance paired with its
                       own genuine text embedding.
* ``spk_adapt_text`` -- enrollment side only: the genuine text embeddings
                       are replaced by one adaptation embedding computed
                       from a few utterances of the target phrase spoken by
                       held-out speakers.  Test utterances always keep
                       their genuine text embeddings.

Enrollment models average their per-utterance embeddings and then length-
normalize the mean.  All trials are scored with plain cosine similarity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Utterance
from .errors import ValidationError
from .metrics import MetricConfig, ScoreReport, breakdown_by_condition, compute_eer, compute_min_dcf
from .network import (
    Embedding,
    FactorizationParams,
    forward_combined,
    forward_speaker,
    forward_text,
)
from .trials import Trial, TrialList

SCORING_MODES = ("spk", "spk_text", "spk_adapt_text")


@dataclass
class EnrollmentModel:
    """A speaker's enrolled representation for one trial list."""

    model_id: str
    speaker_id: int
    enrollment_utt_ids: tuple[str, ...]
    embedding: Embedding
    enrollment_mode: str
    adaptation_source: str  # "none" | "genuine" | "adapted"


def extract_embedding(params, utterance: Utterance, mode: str) -> Embedding:
    """Embed one full utterance; ``mode`` is "spk" or "spk_text"."""
    if mode == "spk":
        ebd, _ = forward_speaker(params, utterance.features)
        return ebd
    if mode == "spk_text":
        if not isinstance(params, FactorizationParams):
            raise ValidationError("spk_text extraction needs a factorization model")
        ebd_s, _ = forward_speaker(params, utterance.features)
        ebd_t, _ = forward_text(params, utterance.features)
        combined, _, _ = forward_combined(params, ebd_s, ebd_t)
        return combined
    raise ValidationError(f"unknown extraction mode {mode!r}")


def extract_embeddings(params, utterances, mode: str) -> dict[str, Embedding]:
    """Per-utterance embeddings keyed by utterance id."""
    return {u.utt_id: extract_embedding(params, u, mode) for u in utterances}


def adaptation_text_embedding(
    params: FactorizationParams, adaptation_utts: list[Utterance]
) -> Embedding:
    """Mean text embedding over utterances that all share the target phrase."""
    if not adaptation_utts:
        raise ValidationError("adaptation needs at least one utterance")
    phrases = {u.phrase_id for u in adaptation_utts}
    if len(phrases) != 1:
        raise ValidationError(f"adaptation utterances mix phrases {sorted(phrases)}")
    vectors = [forward_text(params, u.features)[0].values for u in adaptation_utts]
    return Embedding("text", np.mean(vectors, axis=0))


def enroll(
    params,
    utterances: list[Utterance],
    mode: str,
    adaptation: Embedding | None = None,
    model_id: str | None = None,
    enrollment_mode: str = "text_dependent",
) -> EnrollmentModel:
    """Build one enrollment model from its utterances.

    Per-utterance embeddings follow ``mode``; the model embedding is their
    mean, length-normalized.
    """
    if mode not in SCORING_MODES:
        raise ValidationError(f"unknown scoring mode {mode!r}")
    if not utterances:
        raise ValidationError("enrollment needs at least one utterance")
    speakers = {u.speaker_id for u in utterances}
    if len(speakers) != 1:
        raise ValidationError(f"enrollment utterances mix speakers {sorted(speakers)}")
    if mode == "spk_adapt_text":
        if adaptation is None:
            raise ValidationError("spk_adapt_text enrollment needs an adaptation embedding")
        if adaptation.kind != "text":
            raise ValidationError(f"adaptation embedding has kind {adaptation.kind!r}, not text")

    per_utt = []
    for utt in utterances:
        if mode == "spk":
            per_utt.append(extract_embedding(params, utt, "spk").values)
        elif mode == "spk_text":
            per_utt.append(extract_embedding(params, utt, "spk_text").values)
        else:
            ebd_s, _ = forward_speaker(params, utt.features)
            combined, _, _ = forward_combined(params, ebd_s, adaptation)
            per_utt.append(combined.values)
    mean = np.mean(per_utt, axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise ValueError("enrollment embedding has zero norm")
    kind = "spk" if mode == "spk" else "combined"
    speaker_id = next(iter(speakers))
    return EnrollmentModel(
        model_id=model_id or f"s{speaker_id:04d}",
        speaker_id=speaker_id,
        enrollment_utt_ids=tuple(u.utt_id for u in utterances),
        embedding=Embedding(kind, mean / norm),
        enrollment_mode=enrollment_mode,
        adaptation_source={"spk": "none", "spk_text": "genuine", "spk_adapt_text": "adapted"}[mode],
    )


def cosine_score(a: Embedding, b: Embedding) -> float:
    """Cosine similarity of two equal-length embeddings."""
    va, vb = a.values, b.values
    if va.shape != vb.shape:
        raise ValueError(f"embedding lengths differ: {va.shape} vs {vb.shape}")
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine is undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def score_trials(params, corpus: Corpus, trial_list: TrialList, mode: str) -> np.ndarray:
    """Score every trial in order; returns an array aligned with the trials.

    Test utterances use ``spk`` embeddings in spk mode and combined
    embeddings with their genuine text in the other two modes.
    """
    if mode not in SCORING_MODES:
        raise ValidationError(f"unknown scoring mode {mode!r}")
    if mode != "spk" and not isinstance(params, FactorizationParams):
        raise ValidationError(f"mode {mode!r} needs a factorization model")
    adaptation = None
    if mode == "spk_adapt_text":
        if not trial_list.adaptation_utt_ids:
            raise ValidationError("trial list carries no adaptation utterances")
        adaptation = adaptation_text_embedding(
            params, [corpus.utterance(u) for u in trial_list.adaptation_utt_ids]
        )

    models: dict[str, EnrollmentModel] = {}
    for spec in trial_list.enrollments.values():
        models[spec.model_id] = enroll(
            params,
            [corpus.utterance(u) for u in spec.utt_ids],
            mode,
            adaptation=adaptation,
            model_id=spec.model_id,
            enrollment_mode=spec.enrollment_mode,
        )

    test_mode = "spk" if mode == "spk" else "spk_text"
    test_ids = sorted({t.test_utt_id for t in trial_list.trials})
    test_embeddings = {
        utt_id: extract_embedding(params, corpus.utterance(utt_id), test_mode)
        for utt_id in test_ids
    }
    return np.array(
        [
            cosine_score(models[t.model_id].embedding, test_embeddings[t.test_utt_id])
            for t in trial_list.trials
        ]
    )


def build_report(
    trials: list[Trial], scores, metric_config: MetricConfig = MetricConfig()
) -> ScoreReport:
    """EER, minDCF, per-condition breakdown, and trial counts."""
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) != len(trials):
        raise ValueError(f"{len(scores)} scores for {len(trials)} trials")
    labels = np.array([t.is_target for t in trials])
    conditions = np.array([t.condition for t in trials])
    eer, eer_thr = compute_eer(scores, labels)
    min_dcf, dcf_thr = compute_min_dcf(scores, labels, metric_config)
    breakdown = {}
    if (conditions == "TC").any() and np.array_equal(labels, conditions == "TC"):
        breakdown = breakdown_by_condition(conditions, scores)
    counts: dict[str, int] = {}
    for t in trials:
        counts[t.condition] = counts.get(t.condition, 0) + 1
    return ScoreReport(
        eer=eer,
        min_dcf=min_dcf,
        breakdown=breakdown,
        n_trials=counts,
        eer_threshold=eer_thr,
        dcf_threshold=dcf_thr,
    )
