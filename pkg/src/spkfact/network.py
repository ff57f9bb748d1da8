"""Time-delay layers, the baseline segment embedding model, and the
speaker-text factorization model, with explicit forward/backward passes.

Conventions
-----------
* All arithmetic is float64; corpus features are upcast on entry.
* A time-delay layer is an affine map over the concatenation of frames at
  fixed context offsets, followed by ReLU, followed by batch normalization.
  There is no padding, so a segment loses ``max(offsets) - min(offsets)``
  frames per layer.
* Batch normalization in training mode uses the population statistics of
  the current batch (all frames of all segments for frame-level layers, all
  segments for dense layers) and maintains running statistics with momentum
  0.1 for inference mode.  The train/inference choice is always an explicit
  argument, never ambient state.
* Embeddings are tapped at the pre-activation output of the first dense
  layer after pooling (and of the combiner's first shared dense layer).

The factorization model has four parts: a shared frame-level trunk, a
speaker sub-net, a text sub-net of identical shape (different head size),
and a combiner that consumes the concatenated speaker and text embeddings.
Concatenating the trunk's layers with the speaker sub-net's reproduces the
baseline model's layer list exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
POOL_EPS = 1e-10

EMBEDDING_KINDS = ("spk", "text", "combined")

CHECKPOINT_MAGIC = b"FNCP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    """Structural description of one layer (shape, not weights)."""

    kind: str
    input_dim: int
    output_dim: int
    context_offsets: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("time_delay", "dense", "stats_pool", "output_head"):
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValidationError(f"layer dims must be positive, got {self}")
        if self.kind == "stats_pool" and self.output_dim != 2 * self.input_dim:
            raise ValidationError("stats_pool output must be twice its input (mean ++ std)")
        if self.kind == "time_delay" and not self.context_offsets:
            raise ValidationError("time_delay layers need context offsets")


@dataclass
class Embedding:
    """Fixed-length vector tagged with what it represents."""

    kind: str
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in EMBEDDING_KINDS:
            raise ValidationError(f"embedding kind must be one of {EMBEDDING_KINDS}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValidationError(f"embedding must be 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("embedding contains non-finite values")
        self.values = v


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


class BatchNorm:
    """Per-channel batch normalization over axis 0."""

    def __init__(self, dim: int):
        self.dim = dim
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def forward(self, x: np.ndarray, train: bool, update_running: bool = False):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)  # population variance
            if update_running:
                self.running_mean += BN_MOMENTUM * (mean - self.running_mean)
                self.running_var += BN_MOMENTUM * (var - self.running_var)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean) * inv_std
        y = self.gamma * xhat + self.beta
        return y, (xhat, inv_std, train)

    def backward(self, dy: np.ndarray, cache):
        xhat, inv_std, train = cache
        dgamma = (dy * xhat).sum(axis=0)
        dbeta = dy.sum(axis=0)
        dxhat = dy * self.gamma
        if train:
            dx = inv_std * (
                dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)
            )
        else:
            dx = dxhat * inv_std
        return dx, {"bn.gamma": dgamma, "bn.beta": dbeta}

    def named_parameters(self):
        return [("bn.gamma", self.gamma), ("bn.beta", self.beta)]

    def named_buffers(self):
        return [("bn.running_mean", self.running_mean), ("bn.running_var", self.running_var)]


def _init_affine(rng: np.random.Generator, out_dim: int, fan_in: int):
    bound = 1.0 / np.sqrt(fan_in)
    weight = rng.uniform(-bound, bound, size=(out_dim, fan_in))
    bias = rng.uniform(-bound, bound, size=out_dim)
    return weight, bias


class TimeDelayLayer:
    """Affine over frames at fixed context offsets, then ReLU, then batch norm."""

    kind = "time_delay"

    def __init__(self, input_dim: int, output_dim: int, offsets, rng: np.random.Generator):
        offsets = tuple(int(o) for o in offsets)
        if not offsets or tuple(sorted(set(offsets))) != offsets:
            raise ValidationError(f"offsets must be strictly increasing, got {offsets}")
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.offsets = offsets
        self.weight, self.bias = _init_affine(rng, output_dim, input_dim * len(offsets))
        self.bn = BatchNorm(output_dim)

    @property
    def span(self) -> int:
        return self.offsets[-1] - self.offsets[0]

    @property
    def min_input_frames(self) -> int:
        return self.span + 1

    def spec(self) -> LayerSpec:
        return LayerSpec("time_delay", self.input_dim, self.output_dim, self.offsets)

    def context_stack(self, x: np.ndarray) -> np.ndarray:
        """(N, d) -> (N - span, len(offsets) * d) window concatenation."""
        n_out = len(x) - self.span
        if n_out < 1:
            raise ValueError(
                f"segment has {len(x)} frames; this layer needs at least {self.min_input_frames}"
            )
        base = -self.offsets[0]
        return np.hstack([x[base + o : base + o + n_out] for o in self.offsets])

    def scatter_context(self, du: np.ndarray, n_in: int) -> np.ndarray:
        """Adjoint of :meth:`context_stack`."""
        dx = np.zeros((n_in, self.input_dim))
        n_out = len(du)
        base = -self.offsets[0]
        for j, o in enumerate(self.offsets):
            dx[base + o : base + o + n_out] += du[:, j * self.input_dim : (j + 1) * self.input_dim]
        return dx

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)] + self.bn.named_parameters()

    def named_buffers(self):
        return self.bn.named_buffers()


class DenseLayer:
    """Affine, then ReLU, then batch norm, over segment-level vectors."""

    kind = "dense"

    def __init__(self, input_dim: int, output_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.weight, self.bias = _init_affine(rng, output_dim, input_dim)
        self.bn = BatchNorm(output_dim)

    def spec(self) -> LayerSpec:
        return LayerSpec("dense", self.input_dim, self.output_dim)

    def forward(self, x: np.ndarray, train: bool, update_running: bool = False):
        z = x @ self.weight.T + self.bias
        a = relu(z)
        y, bn_cache = self.bn.forward(a, train, update_running)
        return y, (x, z > 0, bn_cache, z)

    def backward(self, dy: np.ndarray, cache, dz_extra: np.ndarray | None = None):
        x, mask, bn_cache, _ = cache
        da, bn_grads = self.bn.backward(dy, bn_cache)
        dz = da * mask
        if dz_extra is not None:
            dz = dz + dz_extra
        grads = {"weight": dz.T @ x, "bias": dz.sum(axis=0), **bn_grads}
        return dz @ self.weight, grads

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)] + self.bn.named_parameters()

    def named_buffers(self):
        return self.bn.named_buffers()


class OutputHead:
    """Plain affine map producing logits."""

    kind = "output_head"

    def __init__(self, input_dim: int, output_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.weight, self.bias = _init_affine(rng, output_dim, input_dim)

    def spec(self) -> LayerSpec:
        return LayerSpec("output_head", self.input_dim, self.output_dim)

    def forward(self, x: np.ndarray):
        return x @ self.weight.T + self.bias, x

    def backward(self, dlogits: np.ndarray, cache):
        x = cache
        grads = {"weight": dlogits.T @ x, "bias": dlogits.sum(axis=0)}
        return dlogits @ self.weight, grads

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def named_buffers(self):
        return []


def stats_pool(h: np.ndarray) -> np.ndarray:
    """Per-dimension mean concatenated with population standard deviation."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or len(h) < 1:
        raise ValueError(f"stats_pool expects a non-empty (frames, dim) matrix, got {h.shape}")
    mean = h.mean(axis=0)
    std = np.sqrt(h.var(axis=0) + POOL_EPS)
    return np.concatenate([mean, std])


def _stats_pool_backward(h: np.ndarray, mean: np.ndarray, std: np.ndarray, dpooled: np.ndarray):
    d = h.shape[1]
    dmean, dstd = dpooled[:d], dpooled[d:]
    n = len(h)
    return dmean / n + dstd * (h - mean) / (n * std)


# ---------------------------------------------------------------------------
# Frame-level stack over a batch of variable-length segments.
# Batch-norm statistics are shared across all frames of all segments.
# ---------------------------------------------------------------------------


def frame_stack_forward(
    layers, segments, train: bool = False, update_running: bool = False
):
    """Run segments (list of (N_i, d) arrays) through a time-delay stack.

    Returns (outputs, caches); ``outputs`` is a list of per-segment arrays.
    """
    current = [np.asarray(s, dtype=np.float64) for s in segments]
    caches = []
    for layer in layers:
        ctx = [layer.context_stack(x) for x in current]
        out_lengths = [len(c) for c in ctx]
        in_lengths = [len(x) for x in current]
        u = np.concatenate(ctx, axis=0)
        z = u @ layer.weight.T + layer.bias
        a = relu(z)
        y, bn_cache = layer.bn.forward(a, train, update_running)
        caches.append((u, z > 0, bn_cache, out_lengths, in_lengths))
        current = _split_rows(y, out_lengths)
    return current, caches


def frame_stack_backward(layers, caches, grad_segments):
    """Backprop through :func:`frame_stack_forward`.

    Returns (grads, input_grads) where ``grads`` maps "{layer_index}.{param}"
    to arrays and ``input_grads`` is a list matching the original segments.
    """
    grads: dict[str, np.ndarray] = {}
    for idx in range(len(layers) - 1, -1, -1):
        layer = layers[idx]
        u, mask, bn_cache, out_lengths, in_lengths = caches[idx]
        dy = np.concatenate([np.asarray(g, dtype=np.float64) for g in grad_segments], axis=0)
        da, bn_grads = layer.bn.backward(dy, bn_cache)
        dz = da * mask
        grads[f"{idx}.weight"] = dz.T @ u
        grads[f"{idx}.bias"] = dz.sum(axis=0)
        for name, g in bn_grads.items():
            grads[f"{idx}.{name}"] = g
        du = dz @ layer.weight
        du_segments = _split_rows(du, out_lengths)
        grad_segments = [
            layer.scatter_context(du_seg, n_in)
            for du_seg, n_in in zip(du_segments, in_lengths)
        ]
    return grads, grad_segments


def _split_rows(x: np.ndarray, lengths):
    out = []
    start = 0
    for n in lengths:
        out.append(x[start : start + n])
        start += n
    return out


def min_segment_frames(frame_layers) -> int:
    """Smallest input length the stack accepts (receptive field)."""
    return 1 + sum(layer.span for layer in frame_layers)


# ---------------------------------------------------------------------------
# Sub-nets
# ---------------------------------------------------------------------------


class SegmentSubnet:
    """Frame layers + statistics pooling + two dense layers + an output head.

    The baseline model (five frame layers) and the factorization sub-nets
    (two frame layers each) all share this shape.  The sub-net's embedding is
    the pre-activation output of its first dense layer.
    """

    def __init__(self, frame_layers, dense1: DenseLayer, dense2: DenseLayer, head: OutputHead):
        self.frame_layers = list(frame_layers)
        self.dense1 = dense1
        self.dense2 = dense2
        self.head = head

    @property
    def embedding_dim(self) -> int:
        return self.dense1.output_dim

    def layer_specs(self) -> list[LayerSpec]:
        pool_in = self.frame_layers[-1].output_dim if self.frame_layers else self.dense1.input_dim // 2
        return (
            [l.spec() for l in self.frame_layers]
            + [LayerSpec("stats_pool", pool_in, 2 * pool_in)]
            + [self.dense1.spec(), self.dense2.spec(), self.head.spec()]
        )

    def forward(self, segments, train: bool = False, update_running: bool = False):
        """Returns (embeddings (B, e), logits (B, k), cache)."""
        frames, frame_caches = frame_stack_forward(
            self.frame_layers, segments, train, update_running
        )
        pooled = np.stack([stats_pool(h) for h in frames])
        d1_out, d1_cache = self.dense1.forward(pooled, train, update_running)
        ebd = d1_cache[3]  # pre-activation
        d2_out, d2_cache = self.dense2.forward(d1_out, train, update_running)
        logits, head_cache = self.head.forward(d2_out)
        cache = (frames, frame_caches, pooled, d1_cache, d2_cache, head_cache)
        return ebd, logits, cache

    def backward(self, cache, dlogits, dembedding=None):
        """Backprop; ``dembedding`` is injected at the dense1 pre-activation tap.

        Returns (grads, frame_input_grads).
        """
        frames, frame_caches, pooled, d1_cache, d2_cache, head_cache = cache
        dd2, head_grads = self.head.backward(dlogits, head_cache)
        dd1, d2_grads = self.dense2.backward(dd2, d2_cache)
        dpooled, d1_grads = self.dense1.backward(dd1, d1_cache, dz_extra=dembedding)
        dframes = []
        for h, dp in zip(frames, dpooled):
            mean = h.mean(axis=0)
            std = np.sqrt(h.var(axis=0) + POOL_EPS)
            dframes.append(_stats_pool_backward(h, mean, std, dp))
        frame_grads, input_grads = frame_stack_backward(self.frame_layers, frame_caches, dframes)
        grads = {f"frames.{k}": v for k, v in frame_grads.items()}
        grads.update({f"dense1.{k}": v for k, v in d1_grads.items()})
        grads.update({f"dense2.{k}": v for k, v in d2_grads.items()})
        grads.update({f"head.{k}": v for k, v in head_grads.items()})
        return grads, input_grads

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.frame_layers):
            out += [(f"frames.{i}.{n}", p) for n, p in layer.named_parameters()]
        out += [(f"dense1.{n}", p) for n, p in self.dense1.named_parameters()]
        out += [(f"dense2.{n}", p) for n, p in self.dense2.named_parameters()]
        out += [(f"head.{n}", p) for n, p in self.head.named_parameters()]
        return out

    def named_buffers(self):
        out = []
        for i, layer in enumerate(self.frame_layers):
            out += [(f"frames.{i}.{n}", b) for n, b in layer.named_buffers()]
        out += [(f"dense1.{n}", b) for n, b in self.dense1.named_buffers()]
        out += [(f"dense2.{n}", b) for n, b in self.dense2.named_buffers()]
        return out


class CombinerSubnet:
    """Two shared dense layers over [spk ++ text] plus two output heads."""

    def __init__(
        self,
        dense1: DenseLayer,
        dense2: DenseLayer,
        head_speaker: OutputHead,
        head_phoneme: OutputHead,
    ):
        self.dense1 = dense1
        self.dense2 = dense2
        self.head_speaker = head_speaker
        self.head_phoneme = head_phoneme

    @property
    def embedding_dim(self) -> int:
        return self.dense1.output_dim

    def layer_specs(self) -> list[LayerSpec]:
        return [
            self.dense1.spec(),
            self.dense2.spec(),
            self.head_speaker.spec(),
            self.head_phoneme.spec(),
        ]

    def forward(self, x, train: bool = False, update_running: bool = False):
        """x: (B, spk_dim + text_dim). Returns (combined, speaker_logits, phoneme_logits, cache)."""
        if x.shape[1] != self.dense1.input_dim:
            raise ValueError(
                f"combiner expects input dim {self.dense1.input_dim}, got {x.shape[1]}"
            )
        d1_out, d1_cache = self.dense1.forward(x, train, update_running)
        combined = d1_cache[3]
        d2_out, d2_cache = self.dense2.forward(d1_out, train, update_running)
        logits_s, hs_cache = self.head_speaker.forward(d2_out)
        logits_p, hp_cache = self.head_phoneme.forward(d2_out)
        return combined, logits_s, logits_p, (d1_cache, d2_cache, hs_cache, hp_cache)

    def backward(self, cache, dlogits_s, dlogits_p, dcombined=None):
        d1_cache, d2_cache, hs_cache, hp_cache = cache
        dd2_s, hs_grads = self.head_speaker.backward(dlogits_s, hs_cache)
        dd2_p, hp_grads = self.head_phoneme.backward(dlogits_p, hp_cache)
        dd1, d2_grads = self.dense2.backward(dd2_s + dd2_p, d2_cache)
        dx, d1_grads = self.dense1.backward(dd1, d1_cache, dz_extra=dcombined)
        grads = {f"dense1.{k}": v for k, v in d1_grads.items()}
        grads.update({f"dense2.{k}": v for k, v in d2_grads.items()})
        grads.update({f"head_speaker.{k}": v for k, v in hs_grads.items()})
        grads.update({f"head_phoneme.{k}": v for k, v in hp_grads.items()})
        return grads, dx

    def named_parameters(self):
        out = [(f"dense1.{n}", p) for n, p in self.dense1.named_parameters()]
        out += [(f"dense2.{n}", p) for n, p in self.dense2.named_parameters()]
        out += [(f"head_speaker.{n}", p) for n, p in self.head_speaker.named_parameters()]
        out += [(f"head_phoneme.{n}", p) for n, p in self.head_phoneme.named_parameters()]
        return out

    def named_buffers(self):
        out = [(f"dense1.{n}", b) for n, b in self.dense1.named_buffers()]
        out += [(f"dense2.{n}", b) for n, b in self.dense2.named_buffers()]
        return out


# ---------------------------------------------------------------------------
# Model configuration and parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkConfig:
    """Widths and context layout shared by the baseline and factorization models."""

    n_speakers: int
    feature_dim: int = 40
    phoneme_set_size: int = 40
    frame_dims: tuple[int, ...] = (64, 64, 64, 64, 128)
    context_offsets: tuple[tuple[int, ...], ...] = (
        (-2, -1, 0, 1, 2),
        (-2, 0, 2),
        (-3, 0, 3),
        (0,),
        (0,),
    )
    n_shared_frame_layers: int = 3
    spk_embedding_dim: int = 64
    text_embedding_dim: int = 64
    combined_embedding_dim: int = 128

    def validate(self) -> None:
        if self.n_speakers < 2:
            raise ValidationError("need at least 2 speaker classes")
        if self.feature_dim < 1 or self.phoneme_set_size < 2:
            raise ValidationError("feature_dim must be positive and phoneme_set_size >= 2")
        if len(self.frame_dims) != len(self.context_offsets):
            raise ValidationError("frame_dims and context_offsets must have equal length")
        if not 0 < self.n_shared_frame_layers < len(self.frame_dims):
            raise ValidationError(
                "n_shared_frame_layers must split the frame stack into two non-empty parts"
            )
        if self.spk_embedding_dim != self.text_embedding_dim:
            # The speaker and text sub-nets must have identical structures
            # apart from their head sizes.
            raise ValidationError("spk_embedding_dim and text_embedding_dim must match")

    def to_json_dict(self) -> dict:
        return {
            "n_speakers": self.n_speakers,
            "feature_dim": self.feature_dim,
            "phoneme_set_size": self.phoneme_set_size,
            "frame_dims": list(self.frame_dims),
            "context_offsets": [list(o) for o in self.context_offsets],
            "n_shared_frame_layers": self.n_shared_frame_layers,
            "spk_embedding_dim": self.spk_embedding_dim,
            "text_embedding_dim": self.text_embedding_dim,
            "combined_embedding_dim": self.combined_embedding_dim,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "NetworkConfig":
        kwargs = dict(d)
        kwargs["frame_dims"] = tuple(kwargs["frame_dims"])
        kwargs["context_offsets"] = tuple(tuple(o) for o in kwargs["context_offsets"])
        return cls(**kwargs)


def _build_frame_layers(config: NetworkConfig, rng, indices) -> list[TimeDelayLayer]:
    layers = []
    for i in indices:
        in_dim = config.feature_dim if i == 0 else config.frame_dims[i - 1]
        layers.append(TimeDelayLayer(in_dim, config.frame_dims[i], config.context_offsets[i], rng))
    return layers


def _build_segment_subnet(config, rng, frame_indices, embedding_dim, head_dim) -> SegmentSubnet:
    frame_layers = _build_frame_layers(config, rng, frame_indices)
    pooled_dim = 2 * config.frame_dims[frame_indices[-1]]
    dense1 = DenseLayer(pooled_dim, embedding_dim, rng)
    dense2 = DenseLayer(embedding_dim, embedding_dim, rng)
    head = OutputHead(embedding_dim, head_dim, rng)
    return SegmentSubnet(frame_layers, dense1, dense2, head)


class FactorizationParams:
    """All learnable state of the four-part factorization model."""

    model_kind = "factorization"

    def __init__(self, config: NetworkConfig, m_f, m_s, m_t, m_c):
        self.config = config
        self.m_f = m_f  # list[TimeDelayLayer], shared trunk
        self.m_s = m_s  # SegmentSubnet, speaker
        self.m_t = m_t  # SegmentSubnet, text
        self.m_c = m_c  # CombinerSubnet

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.m_f):
            out += [(f"m_f.{i}.{n}", p) for n, p in layer.named_parameters()]
        out += [(f"m_s.{n}", p) for n, p in self.m_s.named_parameters()]
        out += [(f"m_t.{n}", p) for n, p in self.m_t.named_parameters()]
        out += [(f"m_c.{n}", p) for n, p in self.m_c.named_parameters()]
        return out

    def named_buffers(self):
        out = []
        for i, layer in enumerate(self.m_f):
            out += [(f"m_f.{i}.{n}", b) for n, b in layer.named_buffers()]
        out += [(f"m_s.{n}", b) for n, b in self.m_s.named_buffers()]
        out += [(f"m_t.{n}", b) for n, b in self.m_t.named_buffers()]
        out += [(f"m_c.{n}", b) for n, b in self.m_c.named_buffers()]
        return out

    def speaker_path_specs(self) -> list[LayerSpec]:
        """Layer list of trunk ++ speaker sub-net (the baseline-shaped path)."""
        return [l.spec() for l in self.m_f] + self.m_s.layer_specs()

    def frame_layers_speaker(self):
        return self.m_f + self.m_s.frame_layers

    def frame_layers_text(self):
        return self.m_f + self.m_t.frame_layers

    @property
    def min_frames(self) -> int:
        return min_segment_frames(self.frame_layers_speaker())


class BaselineParams:
    """Learnable state of the plain five-layer segment embedding model."""

    model_kind = "baseline"

    def __init__(self, config: NetworkConfig, net: SegmentSubnet):
        self.config = config
        self.net = net

    def named_parameters(self):
        return [(f"net.{n}", p) for n, p in self.net.named_parameters()]

    def named_buffers(self):
        return [(f"net.{n}", b) for n, b in self.net.named_buffers()]

    def layer_specs(self) -> list[LayerSpec]:
        return self.net.layer_specs()

    @property
    def min_frames(self) -> int:
        return min_segment_frames(self.net.frame_layers)


def init_params(config: NetworkConfig, seed) -> FactorizationParams:
    """Deterministically initialize a factorization model.

    Weights and biases are fan-in-scaled uniform draws; batch-norm statistics
    start as the identity transform.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    shared = range(config.n_shared_frame_layers)
    rest = range(config.n_shared_frame_layers, len(config.frame_dims))
    m_f = _build_frame_layers(config, rng, shared)
    m_s = _build_segment_subnet(config, rng, rest, config.spk_embedding_dim, config.n_speakers)
    m_t = _build_segment_subnet(
        config, rng, rest, config.text_embedding_dim, config.phoneme_set_size
    )
    in_dim = config.spk_embedding_dim + config.text_embedding_dim
    dense1 = DenseLayer(in_dim, config.combined_embedding_dim, rng)
    dense2 = DenseLayer(config.combined_embedding_dim, config.combined_embedding_dim, rng)
    head_s = OutputHead(config.combined_embedding_dim, config.n_speakers, rng)
    head_p = OutputHead(config.combined_embedding_dim, config.phoneme_set_size, rng)
    m_c = CombinerSubnet(dense1, dense2, head_s, head_p)
    return FactorizationParams(config, m_f, m_s, m_t, m_c)


def init_baseline(config: NetworkConfig, seed) -> BaselineParams:
    """Deterministically initialize the baseline model (same layer list as
    trunk ++ speaker sub-net of a same-config factorization model)."""
    config.validate()
    rng = np.random.default_rng(seed)
    net = _build_segment_subnet(
        config, rng, range(len(config.frame_dims)), config.spk_embedding_dim, config.n_speakers
    )
    return BaselineParams(config, net)


# ---------------------------------------------------------------------------
# Single-segment forward passes (inference-oriented)
# ---------------------------------------------------------------------------


def forward_frames(layers, x: np.ndarray, train: bool = False) -> np.ndarray:
    """Run one segment through a time-delay stack."""
    x = np.asarray(x, dtype=np.float64)
    need = min_segment_frames(layers)
    if len(x) < need:
        raise ValueError(f"segment has {len(x)} frames; the stack needs at least {need}")
    outputs, _ = frame_stack_forward(layers, [x], train=train)
    return outputs[0]


def forward_speaker(params, x: np.ndarray, train: bool = False):
    """Speaker embedding and speaker logits for one segment.

    Accepts factorization params (trunk + speaker sub-net) or baseline params.
    """
    if isinstance(params, BaselineParams):
        return forward_baseline(params, x, train=train)
    x = _check_min_frames(params, x)
    trunk, _ = frame_stack_forward(params.m_f, [x], train=train)
    ebd, logits, _ = params.m_s.forward(trunk, train=train)
    return Embedding("spk", ebd[0]), logits[0]


def forward_text(params: FactorizationParams, x: np.ndarray, train: bool = False):
    """Text embedding and predicted phoneme distribution for one segment."""
    x = _check_min_frames(params, x)
    trunk, _ = frame_stack_forward(params.m_f, [x], train=train)
    ebd, logits, _ = params.m_t.forward(trunk, train=train)
    return Embedding("text", ebd[0]), softmax(logits[0])


def forward_combined(
    params: FactorizationParams, ebd_s: Embedding, ebd_t: Embedding, train: bool = False
):
    """Combined embedding plus both recovered predictions."""
    if ebd_s.kind != "spk" or ebd_t.kind != "text":
        raise ValidationError(
            f"forward_combined expects (spk, text) embeddings, got ({ebd_s.kind}, {ebd_t.kind})"
        )
    x = np.concatenate([ebd_s.values, ebd_t.values])[None, :]
    combined, logits_s, logits_p, _ = params.m_c.forward(x, train=train)
    return Embedding("combined", combined[0]), logits_s[0], softmax(logits_p[0])


def forward_baseline(params: BaselineParams, x: np.ndarray, train: bool = False):
    x = np.asarray(x, dtype=np.float64)
    if len(x) < params.min_frames:
        raise ValueError(
            f"segment has {len(x)} frames; the model needs at least {params.min_frames}"
        )
    ebd, logits, _ = params.net.forward([x], train=train)
    return Embedding("spk", ebd[0]), logits[0]


def _check_min_frames(params, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < params.min_frames:
        raise ValueError(
            f"segment has {len(x)} frames; the model needs at least {params.min_frames}"
        )
    return x


# ---------------------------------------------------------------------------
# Checkpoint I/O: binary float32 blob + JSON sidecar of layer specs
# ---------------------------------------------------------------------------


def _spec_to_json(spec: LayerSpec) -> dict:
    return {
        "kind": spec.kind,
        "input_dim": spec.input_dim,
        "output_dim": spec.output_dim,
        "context_offsets": list(spec.context_offsets) if spec.context_offsets else None,
    }


def _all_specs(params) -> list[dict]:
    if isinstance(params, BaselineParams):
        return [_spec_to_json(s) for s in params.layer_specs()]
    specs = params.speaker_path_specs() + params.m_t.layer_specs() + params.m_c.layer_specs()
    return [_spec_to_json(s) for s in specs]


def save_checkpoint(params, path) -> Path:
    """Write parameters and batch-norm buffers as little-endian float32.

    The sidecar ``<path>.json`` records the model kind, network config, array
    names/shapes in file order, and the layer-spec list.
    """
    path = Path(path)
    arrays = params.named_parameters() + params.named_buffers()
    sidecar = {
        "format": "spkfact-checkpoint",
        "version": CHECKPOINT_VERSION,
        "model": params.model_kind,
        "network_config": params.config.to_json_dict(),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "layer_specs": _all_specs(params),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(bytes([CHECKPOINT_VERSION]))
        fh.write(struct.pack("<I", len(arrays)))
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_checkpoint(path):
    """Rebuild params from a checkpoint; inverse of :func:`save_checkpoint`."""
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not path.is_file() or not sidecar_path.is_file():
        raise FormatError(f"{path}: checkpoint or sidecar missing")
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sidecar_path}: invalid JSON ({exc})") from exc
    if sidecar.get("format") != "spkfact-checkpoint" or sidecar.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{sidecar_path}: unsupported checkpoint format")
    config = NetworkConfig.from_json_dict(sidecar["network_config"])
    if sidecar["model"] == "factorization":
        params = init_params(config, seed=0)
    elif sidecar["model"] == "baseline":
        params = init_baseline(config, seed=0)
    else:
        raise FormatError(f"{sidecar_path}: unknown model kind {sidecar['model']!r}")

    arrays = params.named_parameters() + params.named_buffers()
    declared = sidecar["arrays"]
    if [d["name"] for d in declared] != [n for n, _ in arrays]:
        raise FormatError(f"{sidecar_path}: array list does not match the declared model")
    for d, (_, a) in zip(declared, arrays):
        if tuple(d["shape"]) != a.shape:
            raise FormatError(
                f"{sidecar_path}: array {d['name']} shape {d['shape']} != expected {list(a.shape)}"
            )
    raw = path.read_bytes()
    header = len(CHECKPOINT_MAGIC) + 1 + 4
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic at offset 0")
    if raw[len(CHECKPOINT_MAGIC)] != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version at offset {len(CHECKPOINT_MAGIC)}")
    (n_arrays,) = struct.unpack("<I", raw[header - 4 : header])
    if n_arrays != len(arrays):
        raise FormatError(f"{path}: {n_arrays} arrays on disk, expected {len(arrays)}")
    expected = header + 4 * sum(a.size for _, a in arrays)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)} (data at {header})")
    offset = header
    for _, a in arrays:
        block = np.frombuffer(raw, dtype="<f4", count=a.size, offset=offset)
        a[...] = block.reshape(a.shape).astype(np.float64)
        offset += 4 * a.size
    if sidecar["layer_specs"] != _all_specs(params):
        raise FormatError(f"{sidecar_path}: layer specs do not match the rebuilt model")
    return params
