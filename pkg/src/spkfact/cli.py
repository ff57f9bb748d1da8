"""Command-line pipeline: gen-corpus, train, trials, score, report.

All commands read an optional JSON config file (sections ``corpus``,
``training``, ``network``, ``metric``, ``trials``) and accept flag
overrides; flags win.  Every command validates its inputs before touching
the output paths, exits 0 on success, and prints a machine-readable error
JSON on stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .benchmark import format_report_table
from .corpus import CorpusConfig, generate_corpus, read_corpus, write_corpus
from .errors import FormatError, NumericError, ValidationError
from .evaluation import build_report, score_trials
from .metrics import MetricConfig
from .network import load_checkpoint, save_checkpoint
from .training import TrainingConfig, default_network_config, fit, fit_baseline
from .trials import (
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


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise FormatError(f"{p}: config file not found")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{p}: config must be a JSON object")
    return doc


def _corpus_config(doc: dict, seed: int | None) -> CorpusConfig:
    cfg = CorpusConfig.from_json_dict(doc.get("corpus", {}))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    cfg.validate()
    return cfg


def _training_config(doc: dict, seed: int | None) -> TrainingConfig:
    cfg = TrainingConfig.from_json_dict(doc.get("training", {}))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    cfg.validate()
    return cfg


def _metric_config(doc: dict) -> MetricConfig:
    cfg = MetricConfig.from_json_dict(doc.get("metric", {}))
    cfg.validate()
    return cfg


def cmd_gen_corpus(args) -> int:
    doc = _load_config_file(args.config)
    cfg = _corpus_config(doc, args.seed)
    corpus = generate_corpus(cfg)
    write_corpus(corpus, args.out)
    print(f"wrote {len(corpus.utterances)} utterances to {args.out}")
    return 0


def cmd_train(args) -> int:
    doc = _load_config_file(args.config)
    cfg = _training_config(doc, args.seed)
    corpus = read_corpus(args.corpus)
    net_config = default_network_config(corpus)
    if "network" in doc:
        from .network import NetworkConfig

        merged = {**net_config.to_json_dict(), **doc["network"]}
        net_config = NetworkConfig.from_json_dict(merged)
    trainer = fit_baseline if args.model == "baseline" else fit
    params, history = trainer(corpus, cfg, net_config=net_config, log_path=args.log)
    save_checkpoint(params, args.out)
    print(
        f"trained {args.model} for {cfg.epochs} epochs; "
        f"loss {history[0].total:.4f} -> {history[-1].total:.4f}; wrote {args.out}"
    )
    return 0


def cmd_trials(args) -> int:
    doc = _load_config_file(args.config)
    trials_doc = doc.get("trials", {})
    corpus = read_corpus(args.corpus)
    seed = args.seed if args.seed is not None else int(trials_doc.get("seed", 0))
    if args.condition == 1:
        ratios = _parse_ratios(args.ratios or trials_doc.get("ratios") or "1:3:3:3")
        trial_list = generate_trials_condition1(corpus, ratios=ratios, seed=seed)
    else:
        if args.target_phrase is None:
            raise ValidationError("--target-phrase is required for condition 2")
        ratios = _parse_ratios(args.ratios or trials_doc.get("ratios") or "1:1:1:1")
        trial_list = generate_trials_condition2(
            corpus,
            target_phrase=args.target_phrase,
            enrollment_mode=args.enroll_mode,
            seed=seed,
            ratios=ratios,
            n_adaptation=int(trials_doc.get("n_adaptation", 10)),
        )
    trials_path = Path(str(args.out) + ".trials.txt")
    write_trials(trial_list, trials_path)
    write_enrollments(trial_list, Path(str(args.out) + ".enroll.json"))
    counts = " ".join(f"{k}={v}" for k, v in trial_list.counts().items())
    print(f"wrote {trials_path} ({counts})")
    return 0


def _parse_ratios(text) -> tuple[int, int, int, int]:
    if isinstance(text, (list, tuple)):
        parts = [int(x) for x in text]
    else:
        try:
            parts = [int(x) for x in str(text).split(":")]
        except ValueError:
            raise ValidationError(f"ratios must look like 1:3:3:3, got {text!r}")
    if len(parts) != 4:
        raise ValidationError(f"ratios need four fields, got {text!r}")
    return tuple(parts)


def cmd_score(args) -> int:
    corpus = read_corpus(args.corpus)
    params = load_checkpoint(args.checkpoint)
    trial_list = read_trial_list(
        Path(str(args.trials) + ".trials.txt"), Path(str(args.trials) + ".enroll.json")
    )
    scores = score_trials(params, corpus, trial_list, args.mode)
    rows = [
        (t.model_id, t.test_utt_id, float(s)) for t, s in zip(trial_list.trials, scores)
    ]
    write_scores(rows, args.out)
    print(f"wrote {len(rows)} scores to {args.out}")
    return 0


def cmd_report(args) -> int:
    doc = _load_config_file(args.config)
    metric = _metric_config(doc)
    trials = read_trials(args.trials)
    if args.text_independent:
        trials = text_independent_view(trials)
    systems = {}
    for item in args.scores:
        label, _, path = item.rpartition("=")
        label = label or Path(path).stem
        score_map = read_scores(path)
        missing = [
            (t.model_id, t.test_utt_id)
            for t in trials
            if (t.model_id, t.test_utt_id) not in score_map
        ]
        if missing:
            raise FormatError(
                f"{path}: missing scores for {len(missing)} trials, e.g. {missing[0]}"
            )
        scores = np.array([score_map[(t.model_id, t.test_utt_id)] for t in trials])
        systems[label] = build_report(trials, scores, metric)
    report_doc = {
        "metric": metric.to_json_dict(),
        "systems": {label: rep.to_json_dict() for label, rep in systems.items()},
    }
    text = json.dumps(report_doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print(format_report_table(systems, title=f"trials: {args.trials}"))
    if args.out:
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spkfact",
        description="speaker-text factorization pipeline on a synthetic corpus",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus directory")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="override the corpus seed")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--model", choices=("factorization", "baseline"), default="factorization")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.add_argument("--log", help="write one JSON line per epoch here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("trials", help="generate a trial list")
    p.add_argument("--corpus", required=True)
    p.add_argument("--condition", type=int, choices=(1, 2), required=True)
    p.add_argument("--out", required=True, help="output prefix (.trials.txt/.enroll.json)")
    p.add_argument("--ratios", help="TC:TW:IC:IW, e.g. 1:3:3:3")
    p.add_argument("--target-phrase", type=int, help="condition-2 target phrase id")
    p.add_argument(
        "--enroll-mode",
        choices=("text_dependent", "text_independent"),
        default="text_dependent",
    )
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("score", help="score a trial list with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--trials", required=True, help="trial prefix from the trials command")
    p.add_argument("--mode", choices=("spk", "spk_text", "spk_adapt_text"), default="spk")
    p.add_argument("--out", required=True, help="score file path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="compute EER/minDCF tables from score files")
    p.add_argument("--trials", required=True, help="trial file (.trials.txt)")
    p.add_argument(
        "--scores",
        required=True,
        nargs="+",
        help="score files, optionally labeled as name=path",
    )
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--config", help="experiment config JSON (metric section)")
    p.add_argument(
        "--text-independent",
        action="store_true",
        help="treat same-speaker wrong-content trials as targets",
    )
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FormatError, NumericError, ValueError, OSError) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
