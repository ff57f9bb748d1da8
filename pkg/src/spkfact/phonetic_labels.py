"""Segment-level phoneme occupancy distributions from frame alignments.

A segment's phonetic content is summarized as the vector of per-class
frame fractions: entry c holds (frames labeled c) / (total frames).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PhonemeSet:
    """A fixed inventory of phoneme classes.

    Index 0 conventionally holds silence/non-speech, which is treated as an
    ordinary class everywhere.
    """

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.names) < 2:
            raise ValueError(f"phoneme set needs at least 2 classes, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("phoneme names must be unique")

    @property
    def size(self) -> int:
        return len(self.names)

    @classmethod
    def default(cls, size: int = 40) -> "PhonemeSet":
        """Silence plus ``size - 1`` generic phone classes."""
        return cls(("sil",) + tuple(f"ph{i:02d}" for i in range(1, size)))


@dataclass
class PhonemeAlignment:
    """Per-frame phoneme indices for one segment, one entry per frame."""

    frame_phonemes: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.frame_phonemes, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError(f"alignment must be 1-D, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("empty segment")
        if np.any(arr < 0):
            frame = int(np.argmax(arr < 0))
            raise ValueError(f"frame {frame} has negative phoneme index {int(arr[frame])}")
        self.frame_phonemes = arr

    def __len__(self) -> int:
        return len(self.frame_phonemes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PhonemeAlignment):
            return NotImplemented
        return np.array_equal(self.frame_phonemes, other.frame_phonemes)


@dataclass
class SegmentPhonemeDistribution:
    """A probability vector over phoneme classes (sums to one)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1:
            raise ValueError(f"distribution must be 1-D, got shape {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("distribution entries must lie in [0, 1]")
        if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"distribution sums to {p.sum()!r}, not 1")
        self.probs = p

    @property
    def size(self) -> int:
        return len(self.probs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SegmentPhonemeDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)


def segment_phoneme_distribution(
    alignment: PhonemeAlignment, phoneme_set: PhonemeSet
) -> SegmentPhonemeDistribution:
    """Count frame occupancy per phoneme class and normalize by segment length."""
    frames = alignment.frame_phonemes
    out_of_range = frames >= phoneme_set.size
    if np.any(out_of_range):
        frame = int(np.argmax(out_of_range))
        raise ValueError(
            f"frame {frame} has phoneme index {int(frames[frame])}, "
            f"outside [0, {phoneme_set.size})"
        )
    counts = np.bincount(frames, minlength=phoneme_set.size)
    return SegmentPhonemeDistribution(counts / float(len(frames)))


def crop_alignment(alignment: PhonemeAlignment, start: int, length: int) -> PhonemeAlignment:
    """Contiguous sub-alignment of ``length`` frames starting at ``start``."""
    if length < 1:
        raise IndexError(f"crop length must be at least 1, got {length}")
    if start < 0 or start + length > len(alignment):
        raise IndexError(
            f"crop [{start}, {start + length}) out of bounds for {len(alignment)} frames"
        )
    return PhonemeAlignment(alignment.frame_phonemes[start : start + length].copy())
