#!/usr/bin/env python3
"""Segment-level phoneme distributions.

A segment's phonetic content is summarized by the fraction of frames each
phoneme class occupies.  This script builds a few alignments by hand and
shows how the distribution reacts to cropping and concatenation.
"""

import numpy as np

from spkfact import PhonemeAlignment, PhonemeSet, crop_alignment, segment_phoneme_distribution

pset = PhonemeSet.default(6)
print(f"phoneme set ({pset.size} classes): {', '.join(pset.names)}")

frames = np.array([0, 0, 1, 1, 1, 1, 3, 3, 5, 5, 5, 5])
ali = PhonemeAlignment(frames)
dist = segment_phoneme_distribution(ali, pset)
print(f"\nalignment ({len(ali)} frames): {frames.tolist()}")
print("distribution:", np.round(dist.probs, 4).tolist())

# Cropping recomputes the label from the crop, never from the parent.
head = crop_alignment(ali, 0, 6)
tail = crop_alignment(ali, 6, 6)
print("\nfirst half :", np.round(segment_phoneme_distribution(head, pset).probs, 4).tolist())
print("second half:", np.round(segment_phoneme_distribution(tail, pset).probs, 4).tolist())

# The full-segment distribution is the length-weighted mix of any split.
mix = 0.5 * segment_phoneme_distribution(head, pset).probs + 0.5 * (
    segment_phoneme_distribution(tail, pset).probs
)
print("\nweighted mix of halves equals the full distribution:",
      bool(np.allclose(mix, dist.probs, atol=1e-12)))

# Frame order never matters: occupancy is a bag-of-frames summary.
rng = np.random.default_rng(0)
shuffled = segment_phoneme_distribution(PhonemeAlignment(rng.permutation(frames)), pset)
print("shuffled frames give the same distribution:", bool(np.array_equal(shuffled.probs, dist.probs)))
