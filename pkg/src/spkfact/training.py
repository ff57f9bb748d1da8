"""Joint training of the factorization model with its four-term loss.

Each step samples a batch of segment pairs (x_s, x_t): the speaker branch
classifies x_s's speaker, the text branch matches x_t's phoneme
distribution, and the combiner must recover both from the concatenated
embeddings.  The total loss is the unweighted sum of the four terms.
Baseline training is the speaker term alone.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, TrainingSegment, crop_training_segments
from .errors import NumericError, ValidationError
from .network import (
    BaselineParams,
    FactorizationParams,
    NetworkConfig,
    frame_stack_backward,
    frame_stack_forward,
    init_baseline,
    init_params,
    softmax,
)

logger = logging.getLogger(__name__)

KL_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    identical_pair_probability: float = 0.5
    crop_min_frames: int = 18
    crop_max_frames: int = 36

    def validate(self) -> None:
        if self.learning_rate < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValidationError("optimizer rates must be non-negative")
        if not 0.0 <= self.identical_pair_probability <= 1.0:
            raise ValidationError("identical_pair_probability must lie in [0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch_size and epochs must be positive")
        if self.crop_min_frames < 1 or self.crop_max_frames < self.crop_min_frames:
            raise ValidationError("crop frame range must be ordered and positive")

    def to_json_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainingConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown training config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LossBreakdown:
    """The four loss terms and their sum."""

    l_s1: float
    l_t1: float
    l_s2: float
    l_t2: float
    total: float

    def __post_init__(self) -> None:
        parts = self.l_s1 + self.l_t1 + self.l_s2 + self.l_t2
        if abs(self.total - parts) > 1e-9:
            raise ValidationError(f"total {self.total} != sum of parts {parts}")

    @classmethod
    def from_parts(cls, l_s1: float, l_t1: float, l_s2: float, l_t2: float) -> "LossBreakdown":
        return cls(l_s1, l_t1, l_s2, l_t2, l_s1 + l_t1 + l_s2 + l_t2)

    def to_json_dict(self) -> dict:
        return {
            "l_s1": self.l_s1,
            "l_t1": self.l_t1,
            "l_s2": self.l_s2,
            "l_t2": self.l_t2,
            "total": self.total,
        }


def cross_entropy(logits: np.ndarray, class_index: int) -> float:
    """Negative log softmax probability of ``class_index`` (max-subtracted)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericError("cross_entropy received non-finite logits")
    if not 0 <= class_index < len(logits):
        raise ValueError(f"class index {class_index} out of range for {len(logits)} logits")
    z = logits - logits.max()
    return float(np.log(np.exp(z).sum()) - z[class_index])


def kl_divergence(target, predicted) -> float:
    """KL(target || predicted) with the 0 log 0 = 0 convention.

    ``predicted`` is floored at 1e-12 before taking logs; both arguments may
    be raw arrays or objects carrying a ``probs`` attribute.
    """
    t = np.asarray(getattr(target, "probs", target), dtype=np.float64)
    p = np.asarray(getattr(predicted, "probs", predicted), dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError(f"distribution shapes differ: {t.shape} vs {p.shape}")
    p = np.maximum(p, KL_FLOOR)
    mask = t > 0
    return float(np.sum(t[mask] * (np.log(t[mask]) - np.log(p[mask]))))


@dataclass
class PairExample:
    """One training pair: speaker-branch segment and text-branch segment."""

    x_s: np.ndarray
    y_s: int
    x_t: np.ndarray
    y_t: np.ndarray  # phoneme distribution of x_t
    identical: bool


@dataclass
class SpeakerExample:
    """Baseline training example (speaker label only)."""

    x: np.ndarray
    y_s: int


class PairSampler:
    """Draws (x_s, x_t) pairs: identical with the configured probability,
    otherwise x_t is uniform over segments of a different speaker."""

    def __init__(self, segments: list[TrainingSegment], identical_pair_probability: float):
        if not segments:
            raise ValueError("segment pool is empty")
        self.segments = segments
        self.p_identical = identical_pair_probability
        speakers = np.array([s.speaker_id for s in segments])
        self._other_indices = {
            spk: np.flatnonzero(speakers != spk) for spk in np.unique(speakers)
        }
        self.single_speaker_fallbacks = 0

    def draw(self, rng: np.random.Generator, s_index: int | None = None) -> PairExample:
        if s_index is None:
            s_index = int(rng.integers(len(self.segments)))
        seg_s = self.segments[s_index]
        identical = bool(rng.random() < self.p_identical)
        if not identical:
            others = self._other_indices[seg_s.speaker_id]
            if len(others) == 0:
                if self.single_speaker_fallbacks == 0:
                    logger.warning("only one speaker in the pool; falling back to identical pairs")
                self.single_speaker_fallbacks += 1
                identical = True
            else:
                seg_t = self.segments[int(others[rng.integers(len(others))])]
        if identical:
            seg_t = seg_s
        return PairExample(
            x_s=seg_s.features,
            y_s=seg_s.speaker_id,
            x_t=seg_t.features,
            y_t=seg_t.target.probs,
            identical=identical,
        )


def sample_pair_batch(
    segments: list[TrainingSegment], config: TrainingConfig, seed
) -> list[PairExample]:
    """Draw ``config.batch_size`` pairs with x_s uniform over the pool."""
    rng = np.random.default_rng(seed)
    sampler = PairSampler(segments, config.identical_pair_probability)
    return [sampler.draw(rng) for _ in range(config.batch_size)]


# ---------------------------------------------------------------------------
# Loss + gradients
# ---------------------------------------------------------------------------


def _one_hot(indices, n_classes: int) -> np.ndarray:
    out = np.zeros((len(indices), n_classes))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def factorization_loss_and_grads(
    params: FactorizationParams,
    batch: list[PairExample],
    train: bool = True,
    update_running: bool = False,
):
    """Mean four-term loss over the batch and gradients for every parameter.

    The shared trunk processes the speaker-branch and text-branch segments
    as one batch, so its batch-norm statistics cover both.
    """
    b = len(batch)
    if b == 0:
        raise ValueError("empty batch")
    xs = [np.asarray(ex.x_s, dtype=np.float64) for ex in batch]
    xt = [np.asarray(ex.x_t, dtype=np.float64) for ex in batch]
    y_s = np.array([ex.y_s for ex in batch])
    y_t = np.stack([np.asarray(ex.y_t, dtype=np.float64) for ex in batch])

    trunk_out, trunk_cache = frame_stack_forward(
        params.m_f, xs + xt, train=train, update_running=update_running
    )
    ebd_s, logits_s1, cache_s = params.m_s.forward(
        trunk_out[:b], train=train, update_running=update_running
    )
    ebd_t, logits_t1, cache_t = params.m_t.forward(
        trunk_out[b:], train=train, update_running=update_running
    )
    mc_in = np.hstack([ebd_s, ebd_t])
    _, logits_s2, logits_t2, cache_c = params.m_c.forward(
        mc_in, train=train, update_running=update_running
    )

    probs_s1 = softmax(logits_s1)
    probs_t1 = softmax(logits_t1)
    probs_s2 = softmax(logits_s2)
    probs_t2 = softmax(logits_t2)

    l_s1 = float(np.mean([cross_entropy(logits_s1[i], int(y_s[i])) for i in range(b)]))
    l_t1 = float(np.mean([kl_divergence(y_t[i], probs_t1[i]) for i in range(b)]))
    l_s2 = float(np.mean([cross_entropy(logits_s2[i], int(y_s[i])) for i in range(b)]))
    l_t2 = float(np.mean([kl_divergence(y_t[i], probs_t2[i]) for i in range(b)]))
    breakdown = LossBreakdown.from_parts(l_s1, l_t1, l_s2, l_t2)

    one_hot = _one_hot(y_s, params.config.n_speakers)
    dlogits_s1 = (probs_s1 - one_hot) / b
    dlogits_t1 = (probs_t1 - y_t) / b
    dlogits_s2 = (probs_s2 - one_hot) / b
    dlogits_t2 = (probs_t2 - y_t) / b

    grads_c, dmc_in = params.m_c.backward(cache_c, dlogits_s2, dlogits_t2)
    e = params.config.spk_embedding_dim
    grads_s, dframe_s = params.m_s.backward(cache_s, dlogits_s1, dembedding=dmc_in[:, :e])
    grads_t, dframe_t = params.m_t.backward(cache_t, dlogits_t1, dembedding=dmc_in[:, e:])
    grads_f, _ = frame_stack_backward(params.m_f, trunk_cache, dframe_s + dframe_t)

    grads = {f"m_f.{k}": v for k, v in grads_f.items()}
    grads.update({f"m_s.{k}": v for k, v in grads_s.items()})
    grads.update({f"m_t.{k}": v for k, v in grads_t.items()})
    grads.update({f"m_c.{k}": v for k, v in grads_c.items()})
    return breakdown, grads


def baseline_loss_and_grads(
    params: BaselineParams,
    batch: list[SpeakerExample],
    train: bool = True,
    update_running: bool = False,
):
    """Mean speaker cross-entropy and gradients for the baseline model."""
    b = len(batch)
    if b == 0:
        raise ValueError("empty batch")
    xs = [np.asarray(ex.x, dtype=np.float64) for ex in batch]
    y_s = np.array([ex.y_s for ex in batch])
    _, logits, cache = params.net.forward(xs, train=train, update_running=update_running)
    probs = softmax(logits)
    l_s1 = float(np.mean([cross_entropy(logits[i], int(y_s[i])) for i in range(b)]))
    dlogits = (probs - _one_hot(y_s, params.config.n_speakers)) / b
    grads_net, _ = params.net.backward(cache, dlogits)
    grads = {f"net.{k}": v for k, v in grads_net.items()}
    return LossBreakdown.from_parts(l_s1, 0.0, 0.0, 0.0), grads


def loss_and_grads(params, batch, train: bool = True, update_running: bool = False):
    if isinstance(params, FactorizationParams):
        return factorization_loss_and_grads(params, batch, train, update_running)
    return baseline_loss_and_grads(params, batch, train, update_running)


# ---------------------------------------------------------------------------
# SGD with momentum and (uniform) weight decay
# ---------------------------------------------------------------------------


@dataclass
class SgdState:
    velocities: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_update(params, grads: dict[str, np.ndarray], config: TrainingConfig, state: SgdState):
    """One in-place update: v <- momentum v + (g + wd p); p <- p - lr v."""
    for name, value in params.named_parameters():
        g = grads[name] + config.weight_decay * value
        v = state.velocities.get(name)
        if v is None:
            v = np.zeros_like(value)
        v = config.momentum * v + g
        state.velocities[name] = v
        value -= config.learning_rate * v


def training_step(params, batch, config: TrainingConfig, state: SgdState | None = None):
    """Forward, backward, and one SGD update. Returns (params, LossBreakdown)."""
    config.validate()
    if state is None:
        state = SgdState()
    breakdown, grads = loss_and_grads(params, batch, train=True, update_running=True)
    for term in ("l_s1", "l_t1", "l_s2", "l_t2"):
        if not np.isfinite(getattr(breakdown, term)):
            raise NumericError(f"loss term {term} is non-finite: {getattr(breakdown, term)}")
    sgd_update(params, grads, config, state)
    return params, breakdown


# ---------------------------------------------------------------------------
# Epoch loop
# ---------------------------------------------------------------------------


def _epoch_mean(breakdowns: list[LossBreakdown], weights: list[int]) -> LossBreakdown:
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    terms = {
        name: float(np.sum(w * np.array([getattr(b, name) for b in breakdowns])))
        for name in ("l_s1", "l_t1", "l_s2", "l_t2")
    }
    return LossBreakdown.from_parts(**terms)


def _log_epoch(log_file, epoch: int, breakdown: LossBreakdown, wall_time: float) -> None:
    if log_file is None:
        return
    record = {"epoch": epoch, **breakdown.to_json_dict(), "wall_time": wall_time}
    log_file.write(json.dumps(record) + "\n")
    log_file.flush()


def _check_trainable(corpus: Corpus, config: TrainingConfig, min_frames: int) -> None:
    if not corpus.split("train"):
        raise ValidationError("corpus has an empty train split")
    if config.crop_min_frames < min_frames:
        raise ValidationError(
            f"crop_min_frames {config.crop_min_frames} is below the model's "
            f"receptive field {min_frames}"
        )


def _run_epochs(params, corpus, config, step_batches, log_path):
    history: list[LossBreakdown] = []
    state = SgdState()
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(config.epochs):
            start = time.monotonic()
            breakdowns, weights = [], []
            for batch in step_batches(epoch):
                params, breakdown = training_step(params, batch, config, state)
                breakdowns.append(breakdown)
                weights.append(len(batch))
            if not breakdowns:
                raise ValidationError(
                    "epoch produced no batches; every training utterance is "
                    "shorter than crop_min_frames"
                )
            epoch_mean = _epoch_mean(breakdowns, weights)
            history.append(epoch_mean)
            _log_epoch(log_file, epoch, epoch_mean, time.monotonic() - start)
    finally:
        if log_file:
            log_file.close()
    return params, history


def _epoch_seeds(config: TrainingConfig, epochs: int):
    root = np.random.SeedSequence(config.seed)
    init_seed, *epoch_seeds = root.spawn(epochs + 1)
    return init_seed, epoch_seeds


def fit(
    corpus: Corpus,
    config: TrainingConfig,
    net_config: NetworkConfig | None = None,
    log_path=None,
):
    """Train a factorization model on the corpus train split.

    Each epoch re-crops every training utterance, shuffles, and pairs each
    crop with an identical or cross-speaker partner.  Deterministic in
    ``config.seed``.  Returns (params, per-epoch LossBreakdown history).
    """
    config.validate()
    if net_config is None:
        net_config = default_network_config(corpus)
    net_config.validate()
    _check_speaker_labels(corpus, net_config)
    init_seed, epoch_seeds = _epoch_seeds(config, config.epochs)
    params = init_params(net_config, seed=init_seed)
    _check_trainable(corpus, config, params.min_frames)

    def step_batches(epoch: int):
        crop_seed, order_seed = epoch_seeds[epoch].spawn(2)
        crops = crop_training_segments(
            corpus, config.crop_min_frames, config.crop_max_frames, seed=crop_seed
        ).segments
        sampler = PairSampler(crops, config.identical_pair_probability)
        rng = np.random.default_rng(order_seed)
        order = rng.permutation(len(crops))
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            yield [sampler.draw(rng, int(i)) for i in chunk]

    return _run_epochs(params, corpus, config, step_batches, log_path)


def fit_baseline(
    corpus: Corpus,
    config: TrainingConfig,
    net_config: NetworkConfig | None = None,
    log_path=None,
):
    """Train the baseline model (speaker cross-entropy only) on the train split."""
    config.validate()
    if net_config is None:
        net_config = default_network_config(corpus)
    net_config.validate()
    _check_speaker_labels(corpus, net_config)
    init_seed, epoch_seeds = _epoch_seeds(config, config.epochs)
    params = init_baseline(net_config, seed=init_seed)
    _check_trainable(corpus, config, params.min_frames)

    def step_batches(epoch: int):
        crop_seed, order_seed = epoch_seeds[epoch].spawn(2)
        crops = crop_training_segments(
            corpus, config.crop_min_frames, config.crop_max_frames, seed=crop_seed
        ).segments
        rng = np.random.default_rng(order_seed)
        order = rng.permutation(len(crops))
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            yield [SpeakerExample(x=crops[i].features, y_s=crops[i].speaker_id) for i in chunk]

    return _run_epochs(params, corpus, config, step_batches, log_path)


def default_network_config(corpus: Corpus) -> NetworkConfig:
    return NetworkConfig(
        n_speakers=corpus.config.n_speakers,
        feature_dim=corpus.config.feature_dim,
        phoneme_set_size=corpus.config.phoneme_set_size,
    )


def _check_speaker_labels(corpus: Corpus, net_config: NetworkConfig) -> None:
    speakers = corpus.speakers("train")
    if speakers and (speakers[0] < 0 or speakers[-1] >= net_config.n_speakers):
        raise ValidationError(
            f"train speaker ids span [{speakers[0]}, {speakers[-1]}], "
            f"outside the {net_config.n_speakers} speaker classes"
        )
