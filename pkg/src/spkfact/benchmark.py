"""End-to-end benchmark wiring: corpus, training, trials, scoring, reports.

The default experiment is the package's reference configuration: a seeded
corpus of 100 training speakers x 30 phrases with a 20-speaker, 10-phrase,
9-repeat evaluation split, trained factorization and baseline models, and
both text-mismatch evaluations.  Everything is deterministic in the
top-level seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, CorpusConfig, generate_corpus
from .errors import ValidationError
from .evaluation import build_report, score_trials
from .metrics import MetricConfig, ScoreReport
from .network import BaselineParams, FactorizationParams, NetworkConfig
from .training import TrainingConfig, default_network_config, fit, fit_baseline
from .trials import (
    TrialList,
    generate_trials_condition1,
    generate_trials_condition2,
    text_independent_view,
)

ENROLL_MODES = ("text_independent", "text_dependent")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one benchmark run depends on."""

    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    condition1_ratios: tuple[int, int, int, int] = (1, 3, 3, 3)
    condition2_ratios: tuple[int, int, int, int] = (1, 1, 1, 1)
    n_condition2_subsets: int = 5
    n_adaptation: int = 10
    trial_seed: int = 1000

    def validate(self) -> None:
        self.corpus.validate()
        self.training.validate()
        self.metric.validate()
        if self.n_condition2_subsets < 1:
            raise ValidationError("need at least one condition-2 subset")
        if self.n_condition2_subsets > self.corpus.n_eval_phrases:
            raise ValidationError(
                f"{self.n_condition2_subsets} condition-2 subsets requested but only "
                f"{self.corpus.n_eval_phrases} eval phrases exist"
            )


def default_experiment(seed: int = 2024) -> ExperimentConfig:
    """The reference benchmark: trains in a few minutes on a desktop CPU."""
    return ExperimentConfig(
        corpus=CorpusConfig(seed=seed),
        training=TrainingConfig(epochs=12, seed=seed + 1),
        trial_seed=seed + 2,
    )


def smoke_experiment(seed: int = 99) -> ExperimentConfig:
    """A ~1-minute sanity configuration (not the reference benchmark)."""
    return ExperimentConfig(
        corpus=CorpusConfig(
            n_speakers=30,
            n_phrases=12,
            n_dev_speakers=10,
            n_eval_speakers=6,
            n_eval_phrases=5,
            seed=seed,
        ),
        training=TrainingConfig(epochs=30, batch_size=24, seed=seed + 1),
        n_condition2_subsets=2,
        trial_seed=seed + 2,
    )


def train_models(
    corpus: Corpus, config: TrainingConfig, net_config: NetworkConfig | None = None
) -> tuple[FactorizationParams, BaselineParams]:
    """Train the factorization model and the baseline on the same data and seed."""
    if net_config is None:
        net_config = default_network_config(corpus)
    fact, _ = fit(corpus, config, net_config=net_config)
    baseline, _ = fit_baseline(corpus, config, net_config=net_config)
    return fact, baseline


@dataclass
class Condition1Result:
    trial_list: TrialList
    reports: dict[str, ScoreReport]  # system name -> report
    text_independent: dict[str, ScoreReport]  # TW relabeled as target


def run_condition1(
    corpus: Corpus,
    fact: FactorizationParams,
    baseline: BaselineParams | None,
    config: ExperimentConfig,
) -> Condition1Result:
    """Score the training/evaluation-mismatch trial list with every system.

    Systems: baseline spk (if a baseline is given), factorization spk, and
    factorization spk+text.  The same scores are re-evaluated with TW trials
    treated as targets for the text-independent view.
    """
    trial_list = generate_trials_condition1(
        corpus, ratios=config.condition1_ratios, seed=config.trial_seed
    )
    systems: dict[str, tuple[object, str]] = {}
    if baseline is not None:
        systems["baseline_spk"] = (baseline, "spk")
    systems["fact_spk"] = (fact, "spk")
    systems["fact_spk_text"] = (fact, "spk_text")

    reports: dict[str, ScoreReport] = {}
    ti_reports: dict[str, ScoreReport] = {}
    ti_trials = text_independent_view(trial_list.trials)
    for name, (params, mode) in systems.items():
        scores = score_trials(params, corpus, trial_list, mode)
        reports[name] = build_report(trial_list.trials, scores, config.metric)
        ti_reports[name] = build_report(ti_trials, scores, config.metric)
    return Condition1Result(trial_list=trial_list, reports=reports, text_independent=ti_reports)


@dataclass
class Condition2Subset:
    target_phrase: int
    enrollment_mode: str
    reports: dict[str, ScoreReport]  # scoring mode -> report


@dataclass
class Condition2Result:
    subsets: list[Condition2Subset]

    def mean_eer(self, scoring_mode: str) -> float:
        eers = [s.reports[scoring_mode].eer for s in self.subsets]
        return float(np.mean(eers))


def condition2_target_phrases(config: ExperimentConfig) -> list[int]:
    """Deterministic subset of eval phrases used as condition-2 targets."""
    phrases = list(config.corpus.eval_phrase_ids)
    rng = np.random.default_rng(config.trial_seed)
    picks = rng.choice(len(phrases), size=config.n_condition2_subsets, replace=False)
    return [phrases[i] for i in sorted(picks)]


def run_condition2(
    corpus: Corpus,
    fact: FactorizationParams,
    config: ExperimentConfig,
    enroll_modes=ENROLL_MODES,
) -> Condition2Result:
    """Score every (target phrase, enrollment mode) subset in all three modes."""
    subsets = []
    for target_phrase in condition2_target_phrases(config):
        for enroll_mode in enroll_modes:
            trial_list = generate_trials_condition2(
                corpus,
                target_phrase=target_phrase,
                enrollment_mode=enroll_mode,
                seed=config.trial_seed + target_phrase,
                ratios=config.condition2_ratios,
                n_adaptation=config.n_adaptation,
            )
            reports = {}
            for mode in ("spk", "spk_text", "spk_adapt_text"):
                scores = score_trials(fact, corpus, trial_list, mode)
                reports[mode] = build_report(trial_list.trials, scores, config.metric)
            subsets.append(
                Condition2Subset(
                    target_phrase=target_phrase, enrollment_mode=enroll_mode, reports=reports
                )
            )
    return Condition2Result(subsets=subsets)


@dataclass
class BenchmarkResult:
    config: ExperimentConfig
    corpus: Corpus
    fact: FactorizationParams
    baseline: BaselineParams
    condition1: Condition1Result
    condition2: Condition2Result


def run_benchmark(config: ExperimentConfig | None = None) -> BenchmarkResult:
    """Generate, train, and evaluate everything; deterministic in the config."""
    if config is None:
        config = default_experiment()
    config.validate()
    corpus = generate_corpus(config.corpus)
    fact, baseline = train_models(corpus, config.training)
    condition1 = run_condition1(corpus, fact, baseline, config)
    condition2 = run_condition2(corpus, fact, config)
    return BenchmarkResult(
        config=config,
        corpus=corpus,
        fact=fact,
        baseline=baseline,
        condition1=condition1,
        condition2=condition2,
    )


def format_report_table(reports: dict[str, ScoreReport], title: str) -> str:
    """Fixed-width comparison table: EER%, minDCF, and per-condition EERs."""
    lines = [title, f"{'system':<22} {'EER(%)':>8} {'minDCF':>8} {'TW(%)':>8} {'IC(%)':>8} {'IW(%)':>8}"]
    for name, rep in reports.items():
        row = [f"{name:<22}", f"{100 * rep.eer:>8.3f}", f"{rep.min_dcf:>8.4f}"]
        for kind in ("TW", "IC", "IW"):
            value = rep.breakdown.get(kind)
            row.append(f"{100 * value:>8.3f}" if value is not None else f"{'-':>8}")
        lines.append(" ".join(row))
    return "\n".join(lines)
