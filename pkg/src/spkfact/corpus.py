"""Seeded synthetic feature corpus with explicit speaker and phrase structure.

Every frame is a linear mixture of a per-speaker latent vector and a
per-phoneme latent vector plus isotropic noise, so speaker identity and
spoken content are controllable, separable factors at desk scale.  The
corpus carries three splits:

* ``train``  -- training speakers uttering training phrases.
* ``dev``    -- held-out speakers uttering the evaluation phrases; the
  source of text-adaptation utterances.
* ``eval``   -- held-out speakers uttering the evaluation phrases several
  times each (first ``eval_enroll_repeats`` repeats are reserved for
  enrollment, the rest for testing).

Speaker id blocks are dense and disjoint in the order train, dev, eval;
phrase ids are dense with training phrases first, evaluation phrases last.

On-disk layout: ``manifest.json`` plus one ``feats/<utt_id>.fsvf`` file per
utterance.  An FSVF file is magic ``b"FSVF"``, a version byte (1), three
little-endian uint32 (n_frames, feature_dim, phoneme_set_size), n_frames
little-endian uint16 phoneme indices, then n_frames x feature_dim
little-endian float32 features, row-major.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .phonetic_labels import (
    PhonemeAlignment,
    PhonemeSet,
    SegmentPhonemeDistribution,
    crop_alignment,
    segment_phoneme_distribution,
)

FSVF_MAGIC = b"FSVF"
FSVF_VERSION = 1
MANIFEST_NAME = "manifest.json"
FEATS_DIR = "feats"
SPLITS = ("train", "dev", "eval")


@dataclass(frozen=True)
class CorpusConfig:
    """Shape and generation parameters for one synthetic corpus."""

    n_speakers: int = 100
    n_phrases: int = 30
    utterances_per_speaker_phrase: int = 1
    n_dev_speakers: int = 10
    n_eval_speakers: int = 20
    n_eval_phrases: int = 10
    eval_repeats: int = 9
    eval_enroll_repeats: int = 3
    dev_repeats: int = 1
    feature_dim: int = 40
    phoneme_set_size: int = 40
    phones_per_phrase: tuple[int, int] = (6, 10)
    frames_per_phone: tuple[int, int] = (4, 8)
    speaker_latent_dim: int = 8
    phoneme_latent_dim: int = 8
    speaker_scale: float = 1.5
    phoneme_scale: float = 1.0
    noise_std: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        counts = {
            "n_speakers": self.n_speakers,
            "n_phrases": self.n_phrases,
            "utterances_per_speaker_phrase": self.utterances_per_speaker_phrase,
            "n_dev_speakers": self.n_dev_speakers,
            "n_eval_speakers": self.n_eval_speakers,
            "n_eval_phrases": self.n_eval_phrases,
            "eval_repeats": self.eval_repeats,
            "eval_enroll_repeats": self.eval_enroll_repeats,
            "dev_repeats": self.dev_repeats,
            "feature_dim": self.feature_dim,
            "speaker_latent_dim": self.speaker_latent_dim,
            "phoneme_latent_dim": self.phoneme_latent_dim,
        }
        for name, value in counts.items():
            if value < 1:
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.phoneme_set_size < 2:
            raise ValidationError("phoneme_set_size must be at least 2")
        if self.phoneme_set_size > 0xFFFF:
            raise ValidationError("phoneme_set_size must fit in uint16")
        if self.eval_enroll_repeats >= self.eval_repeats:
            raise ValidationError("eval_enroll_repeats must leave at least one test repeat")
        if self.eval_repeats > 99 or self.utterances_per_speaker_phrase > 99 or self.dev_repeats > 99:
            raise ValidationError("repeat counts above 99 are not supported by the id scheme")
        for name, rng in (("phones_per_phrase", self.phones_per_phrase), ("frames_per_phone", self.frames_per_phone)):
            lo, hi = rng
            if lo < 1 or hi < lo:
                raise ValidationError(f"{name} must be an ordered positive range, got {rng}")
        if self.noise_std < 0:
            raise ValidationError(f"noise_std must be non-negative, got {self.noise_std}")
        if self.speaker_scale <= 0 or self.phoneme_scale <= 0:
            raise ValidationError("factor scales must be positive")

    # Dense id blocks, ordered train -> dev -> eval.
    @property
    def train_speaker_ids(self) -> range:
        return range(0, self.n_speakers)

    @property
    def dev_speaker_ids(self) -> range:
        return range(self.n_speakers, self.n_speakers + self.n_dev_speakers)

    @property
    def eval_speaker_ids(self) -> range:
        start = self.n_speakers + self.n_dev_speakers
        return range(start, start + self.n_eval_speakers)

    @property
    def train_phrase_ids(self) -> range:
        return range(0, self.n_phrases)

    @property
    def eval_phrase_ids(self) -> range:
        return range(self.n_phrases, self.n_phrases + self.n_eval_phrases)

    @property
    def total_speakers(self) -> int:
        return self.n_speakers + self.n_dev_speakers + self.n_eval_speakers

    @property
    def total_phrases(self) -> int:
        return self.n_phrases + self.n_eval_phrases

    def phoneme_set(self) -> PhonemeSet:
        return PhonemeSet.default(self.phoneme_set_size)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["phones_per_phrase"] = list(self.phones_per_phrase)
        d["frames_per_phone"] = list(self.frames_per_phone)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "CorpusConfig":
        kwargs = dict(d)
        for key in ("phones_per_phrase", "frames_per_phone"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        unknown = set(kwargs) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown corpus config fields: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass
class Utterance:
    """One realized utterance: features plus its ground-truth alignment."""

    utt_id: str
    speaker_id: int
    phrase_id: int
    split: str
    features: np.ndarray  # (n_frames, feature_dim) float32
    alignment: PhonemeAlignment

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValidationError(f"unknown split {self.split!r}")
        feats = np.asarray(self.features)
        if feats.ndim != 2:
            raise ValidationError(f"{self.utt_id}: features must be 2-D, got shape {feats.shape}")
        if len(feats) != len(self.alignment):
            raise ValidationError(
                f"{self.utt_id}: {len(feats)} feature rows vs {len(self.alignment)} aligned frames"
            )
        if not np.all(np.isfinite(feats)):
            raise ValidationError(f"{self.utt_id}: features contain non-finite values")
        self.features = feats

    @property
    def n_frames(self) -> int:
        return len(self.alignment)


@dataclass
class Corpus:
    config: CorpusConfig
    utterances: list[Utterance] = field(default_factory=list)

    def split(self, name: str) -> list[Utterance]:
        if name not in SPLITS:
            raise ValidationError(f"unknown split {name!r}")
        return [u for u in self.utterances if u.split == name]

    def utterance(self, utt_id: str) -> Utterance:
        try:
            return self._by_id[utt_id]
        except AttributeError:
            self._by_id = {u.utt_id: u for u in self.utterances}
            return self._by_id[utt_id]

    def speakers(self, split: str | None = None) -> list[int]:
        utts = self.utterances if split is None else self.split(split)
        return sorted({u.speaker_id for u in utts})

    def phrases(self, split: str | None = None) -> list[int]:
        utts = self.utterances if split is None else self.split(split)
        return sorted({u.phrase_id for u in utts})

    def phoneme_set(self) -> PhonemeSet:
        return self.config.phoneme_set()

    def validate(self) -> None:
        """Check id density, split/speaker block consistency and disjointness."""
        cfg = self.config
        ids = {u.utt_id for u in self.utterances}
        if len(ids) != len(self.utterances):
            raise ValidationError("duplicate utterance ids")
        expected_speakers = {
            "train": set(cfg.train_speaker_ids),
            "dev": set(cfg.dev_speaker_ids),
            "eval": set(cfg.eval_speaker_ids),
        }
        for split, expect in expected_speakers.items():
            got = set(self.speakers(split))
            if got != expect:
                raise ValidationError(
                    f"{split} split covers speakers {sorted(got)[:5]}..., "
                    f"expected the dense block {min(expect)}..{max(expect)}"
                )
        if set(self.speakers("train")) & set(self.speakers("eval")):
            raise ValidationError("train and eval speakers overlap")
        expected_phrases = {
            "train": set(cfg.train_phrase_ids),
            "dev": set(cfg.eval_phrase_ids),
            "eval": set(cfg.eval_phrase_ids),
        }
        for split, expect in expected_phrases.items():
            got = set(self.phrases(split))
            if got != expect:
                raise ValidationError(f"{split} split phrase ids do not match the config blocks")
        for u in self.utterances:
            if u.features.shape[1] != cfg.feature_dim:
                raise ValidationError(
                    f"{u.utt_id}: feature dim {u.features.shape[1]} != config {cfg.feature_dim}"
                )


def _utt_id(split: str, speaker: int, phrase: int, repeat: int) -> str:
    return f"{split}_s{speaker:04d}_p{phrase:03d}_u{repeat:02d}"


def repeat_index(utt_id: str) -> int:
    """Repeat counter encoded in an utterance id."""
    return int(utt_id.rsplit("_u", 1)[1])


def generate_corpus(config: CorpusConfig) -> Corpus:
    """Deterministically generate a corpus from its config (including seed).

    Draw order from a single PCG64 stream: speaker mixing matrix, phoneme
    mixing matrix, phoneme latents, speaker latents, phrase phone sequences,
    then utterances in train/dev/eval order (speaker-major, phrase, repeat).
    Each utterance draws its per-phone durations and then its frame noise.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    d = config.feature_dim
    mix_speaker = config.speaker_scale * rng.standard_normal(
        (d, config.speaker_latent_dim)
    ) / np.sqrt(config.speaker_latent_dim)
    mix_phoneme = config.phoneme_scale * rng.standard_normal(
        (d, config.phoneme_latent_dim)
    ) / np.sqrt(config.phoneme_latent_dim)
    phoneme_latents = rng.standard_normal((config.phoneme_set_size, config.phoneme_latent_dim))
    speaker_latents = rng.standard_normal((config.total_speakers, config.speaker_latent_dim))

    lo, hi = config.phones_per_phrase
    phrase_lengths = rng.integers(lo, hi + 1, size=config.total_phrases)
    phrases = [
        rng.integers(0, config.phoneme_set_size, size=int(n)) for n in phrase_lengths
    ]

    speaker_part = speaker_latents @ mix_speaker.T  # (total_speakers, d)
    phone_part = phoneme_latents @ mix_phoneme.T  # (C, d)
    fmin, fmax = config.frames_per_phone

    def realize(split: str, speaker: int, phrase: int, repeat: int) -> Utterance:
        phones = phrases[phrase]
        durations = rng.integers(fmin, fmax + 1, size=len(phones))
        frame_phones = np.repeat(phones, durations)
        clean = speaker_part[speaker][None, :] + phone_part[frame_phones]
        noise = rng.standard_normal((len(frame_phones), d))
        feats = (clean + config.noise_std * noise).astype(np.float32)
        return Utterance(
            utt_id=_utt_id(split, speaker, phrase, repeat),
            speaker_id=speaker,
            phrase_id=phrase,
            split=split,
            features=feats,
            alignment=PhonemeAlignment(frame_phones),
        )

    utterances: list[Utterance] = []
    for speaker in config.train_speaker_ids:
        for phrase in config.train_phrase_ids:
            for rep in range(config.utterances_per_speaker_phrase):
                utterances.append(realize("train", speaker, phrase, rep))
    for speaker in config.dev_speaker_ids:
        for phrase in config.eval_phrase_ids:
            for rep in range(config.dev_repeats):
                utterances.append(realize("dev", speaker, phrase, rep))
    for speaker in config.eval_speaker_ids:
        for phrase in config.eval_phrase_ids:
            for rep in range(config.eval_repeats):
                utterances.append(realize("eval", speaker, phrase, rep))

    corpus = Corpus(config=config, utterances=utterances)
    corpus.validate()
    return corpus


def generation_latents(config: CorpusConfig) -> dict[str, np.ndarray]:
    """Re-derive the latent factors a corpus was generated from.

    Replays the leading draws of the generation stream; useful for oracle
    checks against the linear generation model.
    """
    rng = np.random.default_rng(config.seed)
    d = config.feature_dim
    return {
        "mix_speaker": config.speaker_scale
        * rng.standard_normal((d, config.speaker_latent_dim))
        / np.sqrt(config.speaker_latent_dim),
        "mix_phoneme": config.phoneme_scale
        * rng.standard_normal((d, config.phoneme_latent_dim))
        / np.sqrt(config.phoneme_latent_dim),
        "phoneme_latents": rng.standard_normal(
            (config.phoneme_set_size, config.phoneme_latent_dim)
        ),
        "speaker_latents": rng.standard_normal(
            (config.total_speakers, config.speaker_latent_dim)
        ),
    }


@dataclass
class TrainingSegment:
    """A cropped training example with labels computed from the crop."""

    utt_id: str
    speaker_id: int
    phrase_id: int
    features: np.ndarray
    target: SegmentPhonemeDistribution


@dataclass
class CropResult:
    segments: list[TrainingSegment]
    n_skipped: int


def crop_training_segments(
    corpus: Corpus,
    min_frames: int,
    max_frames: int,
    seed,
    split: str = "train",
) -> CropResult:
    """Uniformly random crop per utterance; labels come from the crop itself.

    Utterances shorter than ``min_frames`` are skipped and counted in the
    returned metadata.  Deterministic in ``seed``.
    """
    if min_frames < 1 or max_frames < min_frames:
        raise ValidationError(
            f"crop range [{min_frames}, {max_frames}] must be ordered and positive"
        )
    rng = np.random.default_rng(seed)
    pset = corpus.phoneme_set()
    segments: list[TrainingSegment] = []
    skipped = 0
    for utt in corpus.split(split):
        n = utt.n_frames
        if n < min_frames:
            skipped += 1
            continue
        length = int(rng.integers(min_frames, min(max_frames, n) + 1))
        start = int(rng.integers(0, n - length + 1))
        ali = crop_alignment(utt.alignment, start, length)
        segments.append(
            TrainingSegment(
                utt_id=utt.utt_id,
                speaker_id=utt.speaker_id,
                phrase_id=utt.phrase_id,
                features=utt.features[start : start + length],
                target=segment_phoneme_distribution(ali, pset),
            )
        )
    return CropResult(segments=segments, n_skipped=skipped)


def _write_fsvf(path: Path, utt: Utterance, phoneme_set_size: int) -> None:
    frames = utt.alignment.frame_phonemes
    n, dim = utt.features.shape
    with open(path, "wb") as fh:
        fh.write(FSVF_MAGIC)
        fh.write(bytes([FSVF_VERSION]))
        fh.write(struct.pack("<III", n, dim, phoneme_set_size))
        fh.write(frames.astype("<u2").tobytes())
        fh.write(np.ascontiguousarray(utt.features, dtype="<f4").tobytes())


def _read_fsvf(path: Path, expected_c: int) -> tuple[np.ndarray, PhonemeAlignment]:
    raw = path.read_bytes()
    header_len = 4 + 1 + 12
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated header at offset {len(raw)}")
    if raw[:4] != FSVF_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r} at offset 0")
    if raw[4] != FSVF_VERSION:
        raise FormatError(f"{path}: unsupported version {raw[4]} at offset 4")
    n, dim, c = struct.unpack("<III", raw[5:17])
    if c != expected_c:
        raise FormatError(f"{path}: phoneme set size {c} != manifest {expected_c} at offset 13")
    ali_end = header_len + 2 * n
    feat_end = ali_end + 4 * n * dim
    if len(raw) != feat_end:
        raise FormatError(
            f"{path}: expected {feat_end} bytes, got {len(raw)} (payload starts at {header_len})"
        )
    frames = np.frombuffer(raw, dtype="<u2", count=n, offset=header_len)
    feats = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=ali_end).reshape(n, dim)
    return feats.astype(np.float32), PhonemeAlignment(frames)


def write_corpus(corpus: Corpus, directory) -> Path:
    """Write ``manifest.json`` plus one FSVF file per utterance."""
    corpus.validate()
    directory = Path(directory)
    feats_dir = directory / FEATS_DIR
    feats_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for utt in corpus.utterances:
        rel = f"{FEATS_DIR}/{utt.utt_id}.fsvf"
        _write_fsvf(directory / rel, utt, corpus.config.phoneme_set_size)
        entries.append(
            {
                "utt_id": utt.utt_id,
                "speaker_id": utt.speaker_id,
                "phrase_id": utt.phrase_id,
                "split": utt.split,
                "path": rel,
            }
        )
    manifest = {
        "format": "fsvf-corpus",
        "version": FSVF_VERSION,
        "config": corpus.config.to_json_dict(),
        "utterances": entries,
    }
    with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def read_corpus(directory) -> Corpus:
    """Load a corpus directory; validates formats and corpus invariants."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"{manifest_path}: missing manifest")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    for key in ("format", "version", "config", "utterances"):
        if key not in manifest:
            raise FormatError(f"{manifest_path}: missing field {key!r}")
    if manifest["format"] != "fsvf-corpus" or manifest["version"] != FSVF_VERSION:
        raise FormatError(
            f"{manifest_path}: unsupported format "
            f"{manifest['format']!r} v{manifest['version']!r}"
        )
    config = CorpusConfig.from_json_dict(manifest["config"])
    config.validate()
    utterances = []
    for entry in manifest["utterances"]:
        feats, alignment = _read_fsvf(directory / entry["path"], config.phoneme_set_size)
        if feats.shape[1] != config.feature_dim:
            raise FormatError(
                f"{directory / entry['path']}: feature dim {feats.shape[1]} "
                f"!= config {config.feature_dim}"
            )
        utterances.append(
            Utterance(
                utt_id=entry["utt_id"],
                speaker_id=int(entry["speaker_id"]),
                phrase_id=int(entry["phrase_id"]),
                split=entry["split"],
                features=feats,
                alignment=alignment,
            )
        )
    corpus = Corpus(config=config, utterances=utterances)
    corpus.validate()
    return corpus


def corpora_equal(a: Corpus, b: Corpus) -> bool:
    """Field-for-field equality, exact on features and alignments."""
    if a.config != b.config or len(a.utterances) != len(b.utterances):
        return False
    for ua, ub in zip(a.utterances, b.utterances):
        if (ua.utt_id, ua.speaker_id, ua.phrase_id, ua.split) != (
            ub.utt_id,
            ub.speaker_id,
            ub.phrase_id,
            ub.split,
        ):
            return False
        if not np.array_equal(ua.features, ub.features):
            return False
        if ua.alignment != ub.alignment:
            return False
    return True
