"""Synthetic corpus generation and FSVF round-trip tests."""

import json

import numpy as np
import pytest

from spkfact.corpus import (
    CorpusConfig,
    corpora_equal,
    crop_training_segments,
    generate_corpus,
    generation_latents,
    read_corpus,
    write_corpus,
)
from spkfact.errors import FormatError, ValidationError
from spkfact.phonetic_labels import segment_phoneme_distribution


def small_config(**overrides):
    defaults = dict(
        n_speakers=5,
        n_phrases=4,
        n_dev_speakers=2,
        n_eval_speakers=3,
        n_eval_phrases=4,
        eval_repeats=5,
        eval_enroll_repeats=3,
        phones_per_phrase=(4, 7),
        frames_per_phone=(3, 6),
        seed=42,
    )
    defaults.update(overrides)
    return CorpusConfig(**defaults)


class TestGeneration:
    def test_seed_determinism(self):
        a = generate_corpus(small_config())
        b = generate_corpus(small_config())
        assert corpora_equal(a, b)

    def test_different_seed_differs(self):
        a = generate_corpus(small_config())
        b = generate_corpus(small_config(seed=43))
        assert not corpora_equal(a, b)

    def test_split_sizes(self):
        cfg = small_config()
        corpus = generate_corpus(cfg)
        assert len(corpus.split("train")) == cfg.n_speakers * cfg.n_phrases
        assert len(corpus.split("dev")) == cfg.n_dev_speakers * cfg.n_eval_phrases
        assert len(corpus.split("eval")) == (
            cfg.n_eval_speakers * cfg.n_eval_phrases * cfg.eval_repeats
        )

    def test_speaker_and_phrase_blocks_disjoint(self):
        cfg = small_config()
        corpus = generate_corpus(cfg)
        assert set(corpus.speakers("train")) == set(cfg.train_speaker_ids)
        assert set(corpus.speakers("eval")) == set(cfg.eval_speaker_ids)
        assert not set(corpus.speakers("train")) & set(corpus.speakers("eval"))
        assert not set(corpus.phrases("train")) & set(corpus.phrases("eval"))
        assert set(corpus.phrases("dev")) == set(corpus.phrases("eval"))

    def test_noiseless_same_durations_identical_features(self):
        cfg = small_config(noise_std=0.0, frames_per_phone=(4, 4), eval_repeats=5)
        corpus = generate_corpus(cfg)
        utts = [
            u
            for u in corpus.split("eval")
            if u.speaker_id == corpus.speakers("eval")[0]
            and u.phrase_id == corpus.phrases("eval")[0]
        ]
        assert len(utts) == cfg.eval_repeats
        for u in utts[1:]:
            np.testing.assert_array_equal(u.features, utts[0].features)

    def test_noiseless_mean_matches_latent_model(self):
        # Mean frame = speaker component + duration-weighted phone components,
        # rebuilt with the same float32 quantization the generator applies.
        cfg = small_config(noise_std=0.0)
        corpus = generate_corpus(cfg)
        lat = generation_latents(cfg)
        speaker_part = lat["speaker_latents"] @ lat["mix_speaker"].T
        phone_part = lat["phoneme_latents"] @ lat["mix_phoneme"].T
        for utt in corpus.utterances[:20]:
            frames = utt.alignment.frame_phonemes
            proto = (speaker_part[utt.speaker_id][None, :] + phone_part[frames]).astype(
                np.float32
            )
            np.testing.assert_allclose(
                utt.features.astype(np.float64).mean(axis=0),
                proto.astype(np.float64).mean(axis=0),
                atol=1e-9,
            )
            # And the unquantized model matches to float32 resolution.
            np.testing.assert_allclose(
                utt.features.astype(np.float64),
                speaker_part[utt.speaker_id][None, :] + phone_part[frames],
                atol=1e-5,
            )

    def test_noiseless_speaker_differences_live_in_speaker_mixing_range(self):
        cfg = small_config(noise_std=0.0, frames_per_phone=(3, 3))
        corpus = generate_corpus(cfg)
        lat = generation_latents(cfg)
        mix = lat["mix_speaker"]
        # Two speakers uttering the same phrase share every phone.
        train = corpus.split("train")
        a = train[0]
        b = next(
            u for u in train if u.phrase_id == a.phrase_id and u.speaker_id != a.speaker_id
        )
        phone = int(a.alignment.frame_phonemes[0])
        fa = a.features[np.argmax(a.alignment.frame_phonemes == phone)].astype(np.float64)
        fb = b.features[np.argmax(b.alignment.frame_phonemes == phone)].astype(np.float64)
        diff = fa - fb
        coef, *_ = np.linalg.lstsq(mix, diff, rcond=None)
        residual = diff - mix @ coef
        assert np.linalg.norm(residual) <= 1e-5 * max(np.linalg.norm(diff), 1.0)

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValidationError):
            generate_corpus(small_config(noise_std=-1.0))
        with pytest.raises(ValidationError):
            generate_corpus(small_config(frames_per_phone=(5, 3)))
        with pytest.raises(ValidationError):
            generate_corpus(small_config(eval_enroll_repeats=5, eval_repeats=5))


class TestCrops:
    def test_full_length_crop_matches_full_distribution(self):
        cfg = small_config(frames_per_phone=(4, 4), phones_per_phrase=(5, 5))
        corpus = generate_corpus(cfg)
        n = corpus.split("train")[0].n_frames
        result = crop_training_segments(corpus, n, n, seed=0)
        assert result.n_skipped == 0
        pset = corpus.phoneme_set()
        for seg, utt in zip(result.segments, corpus.split("train")):
            full = segment_phoneme_distribution(utt.alignment, pset)
            np.testing.assert_array_equal(seg.target.probs, full.probs)

    def test_crop_labels_match_alignment_oracle(self):
        corpus = generate_corpus(small_config())
        result = crop_training_segments(corpus, 10, 18, seed=3)
        pset = corpus.phoneme_set()
        by_id = {u.utt_id: u for u in corpus.split("train")}
        for seg in result.segments:
            utt = by_id[seg.utt_id]
            n = len(seg.features)
            # Locate the crop by matching feature rows, then recompute the label.
            starts = [
                s
                for s in range(utt.n_frames - n + 1)
                if np.array_equal(utt.features[s : s + n], seg.features)
            ]
            assert starts
            counts = np.bincount(
                utt.alignment.frame_phonemes[starts[0] : starts[0] + n],
                minlength=pset.size,
            )
            np.testing.assert_allclose(seg.target.probs, counts / n)

    def test_same_seed_same_schedule(self):
        corpus = generate_corpus(small_config())
        a = crop_training_segments(corpus, 10, 20, seed=5)
        b = crop_training_segments(corpus, 10, 20, seed=5)
        assert len(a.segments) == len(b.segments)
        for sa, sb in zip(a.segments, b.segments):
            np.testing.assert_array_equal(sa.features, sb.features)

    def test_short_utterances_skipped_with_count(self):
        corpus = generate_corpus(small_config())
        longest = max(u.n_frames for u in corpus.split("train"))
        result = crop_training_segments(corpus, longest, longest, seed=0)
        expected = sum(1 for u in corpus.split("train") if u.n_frames < longest)
        assert result.n_skipped == expected

    def test_bad_range_rejected(self):
        corpus = generate_corpus(small_config())
        with pytest.raises(ValidationError):
            crop_training_segments(corpus, 10, 5, seed=0)


class TestRoundTrip:
    def test_round_trip_is_exact(self, tmp_path):
        corpus = generate_corpus(small_config())
        write_corpus(corpus, tmp_path / "corpus")
        loaded = read_corpus(tmp_path / "corpus")
        assert corpora_equal(corpus, loaded)

    def test_truncated_feature_file_rejected(self, tmp_path):
        corpus = generate_corpus(small_config())
        root = write_corpus(corpus, tmp_path / "corpus")
        victim = next((root / "feats").iterdir())
        data = victim.read_bytes()
        victim.write_bytes(data[:-7])
        with pytest.raises(FormatError, match=victim.name):
            read_corpus(root)

    def test_bad_magic_rejected(self, tmp_path):
        corpus = generate_corpus(small_config())
        root = write_corpus(corpus, tmp_path / "corpus")
        victim = next((root / "feats").iterdir())
        data = bytearray(victim.read_bytes())
        data[:4] = b"XXXX"
        victim.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            read_corpus(root)

    def test_manifest_speaker_mismatch_rejected(self, tmp_path):
        corpus = generate_corpus(small_config())
        root = write_corpus(corpus, tmp_path / "corpus")
        manifest = json.loads((root / "manifest.json").read_text())
        manifest["config"]["n_speakers"] = 99
        (root / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ValidationError):
            read_corpus(root)

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(FormatError, match="manifest"):
            read_corpus(tmp_path / "nowhere")
