"""Speaker-text factorization embeddings with a synthetic text-mismatch benchmark."""

from .corpus import (
    Corpus,
    CorpusConfig,
    CropResult,
    TrainingSegment,
    Utterance,
    corpora_equal,
    crop_training_segments,
    generate_corpus,
    read_corpus,
    write_corpus,
)
from .errors import FormatError, NumericError, ValidationError
from .evaluation import (
    EnrollmentModel,
    adaptation_text_embedding,
    build_report,
    cosine_score,
    enroll,
    extract_embedding,
    extract_embeddings,
    score_trials,
)
from .metrics import MetricConfig, ScoreReport, breakdown_by_condition, compute_eer, compute_min_dcf
from .network import (
    BaselineParams,
    Embedding,
    FactorizationParams,
    LayerSpec,
    NetworkConfig,
    forward_baseline,
    forward_combined,
    forward_frames,
    forward_speaker,
    forward_text,
    init_baseline,
    init_params,
    load_checkpoint,
    save_checkpoint,
    stats_pool,
)
from .phonetic_labels import (
    PhonemeAlignment,
    PhonemeSet,
    SegmentPhonemeDistribution,
    crop_alignment,
    segment_phoneme_distribution,
)
from .training import (
    LossBreakdown,
    TrainingConfig,
    cross_entropy,
    fit,
    fit_baseline,
    kl_divergence,
    sample_pair_batch,
    training_step,
)
from .trials import (
    EnrollmentSpec,
    Trial,
    TrialList,
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

__version__ = "0.1.0"
