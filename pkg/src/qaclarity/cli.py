"""Command-line entry points: train, predict, evaluate, ablate, report."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from .checkpoint import Checkpoint
from .config import RunConfig, load_run_config, with_overrides
from .dataset import load_dataset, load_unlabeled, summarize
from .ensemble import Ensemble, read_predictions, write_predictions, write_submission
from .errors import ConfigError, DataError, NumericError
from .evaluation import dataset_kappas, evaluate_predictions
from .model import LossConfig, LossKind, PoolingStrategy
from .reporting import (
    render_ablation_table,
    render_eval_text,
    write_ablation_csv,
    write_chunk_counts_csv,
    write_confusion_csvs,
    write_histogram_csv,
    write_per_class_csv,
    write_strata_csv,
    render_histogram_svg,
)
from .training import run_cv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _load_config(args) -> RunConfig:
    if args.config is None:
        cfg = RunConfig()
    else:
        cfg = load_run_config(args.config)
    return with_overrides(cfg, seed=args.seed, out=args.out, threads=args.threads)


def _detect_split(path) -> str:
    if not Path(path).exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"malformed JSON: {exc.msg}",
                                    path=path, line=lineno) from None
                return "annotated" if "clarity_annotations" in record else "train"
    return "train"


def _load_gold(path, split: str):
    kind = _detect_split(path) if split == "auto" else split
    return load_dataset(path, kind), kind


# ---------------------------
# train
# ---------------------------

def cmd_train(args) -> int:
    cfg = _load_config(args)
    if cfg.train_path is None:
        raise ConfigError("train command needs data.train in the config file")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    instances = load_dataset(cfg.train_path, "train")
    print(f"loaded {len(instances)} training instances from {cfg.train_path}")

    result = run_cv(instances, cfg.settings, threads=cfg.threads)

    resolved = replace(cfg, settings=result.settings)
    _write_json(resolved.to_dict(), out_dir / "resolved_config.json")

    for fold, ckpt in enumerate(result.checkpoints):
        ckpt.save(out_dir / f"fold_{fold}.npz")
    write_predictions(result.oof_rows, out_dir / "oof_predictions.jsonl")

    for fold, res in enumerate(result.fold_results):
        log_path = out_dir / f"train_log_fold{fold}.csv"
        with open(log_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_clarity_f1",
                             "val_evasion_f1", "val_combined_f1", "learning_rate"])
            for row in res.epochs:
                writer.writerow([row.epoch, f"{row.train_loss:.8f}",
                                 f"{row.val_clarity_f1:.8f}", f"{row.val_evasion_f1:.8f}",
                                 f"{row.val_combined_f1:.8f}", f"{row.learning_rate:.10g}"])

    summary = result.summary()
    _write_json(summary, out_dir / "cv_metrics.json")

    for fold in range(result.plan.k):
        print(f"fold {fold}: clarity F1 {result.fold_clarity_f1[fold]:.4f}  "
              f"evasion F1 {result.fold_evasion_f1[fold]:.4f}  "
              f"(best epoch {result.checkpoints[fold].epoch})")
    print(f"clarity F1 {summary['clarity_f1_mean']:.4f} +/- {summary['clarity_f1_std']:.4f}")
    print(f"evasion F1 {summary['evasion_f1_mean']:.4f} +/- {summary['evasion_f1_std']:.4f}")
    print(f"artifacts written to {out_dir}")
    return EXIT_OK


# ---------------------------
# predict
# ---------------------------

def _collect_checkpoints(paths: list[str]) -> list[Checkpoint]:
    files: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            found = sorted(p.glob("*.npz"))
            if not found:
                raise ConfigError(f"no .npz checkpoints found in directory {p}")
            files.extend(found)
        else:
            files.append(p)
    # Model order is fixed by file name so reruns reduce in the same order.
    files = sorted(files)
    return [Checkpoint.load(p) for p in files]


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    checkpoints = _collect_checkpoints(args.checkpoints)
    ensemble = Ensemble(checkpoints)
    instances = load_unlabeled(args.input)
    print(f"predicting {len(instances)} instances with {len(checkpoints)} model(s)")

    rows = [pred.to_record() for pred in ensemble.predict_many(instances)]
    write_predictions(rows, out_dir / "predictions.jsonl")
    write_submission(rows, out_dir / "submission_clarity.jsonl", "clarity")
    write_submission(rows, out_dir / "submission_evasion.jsonl", "evasion")
    print(f"wrote predictions to {out_dir / 'predictions.jsonl'}")
    return EXIT_OK


# ---------------------------
# evaluate
# ---------------------------

def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    instances, kind = _load_gold(args.gold, args.split)
    rows = read_predictions(args.predictions)
    report = evaluate_predictions(instances, rows)

    _write_json(report.to_dict(), out_dir / "eval_report.json")
    text = render_eval_text(report)
    (out_dir / "eval_report.txt").write_text(text, encoding="utf-8")
    write_confusion_csvs(report, out_dir)
    print(f"gold split: {kind}")
    print(text, end="")
    return EXIT_OK


# ---------------------------
# ablate
# ---------------------------

def _ablation_variants(axis: str, cfg: RunConfig):
    settings = cfg.settings
    if axis == "pooling":
        return [(s.value, replace(settings, pooling=s)) for s in PoolingStrategy]
    if axis == "multitask":
        return [
            ("multi-task", settings),
            ("clarity-only", replace(settings, loss=replace(
                settings.loss, clarity_enabled=True, evasion_enabled=False))),
            ("evasion-only", replace(settings, loss=replace(
                settings.loss, clarity_enabled=False, evasion_enabled=True))),
        ]
    if axis == "folds":
        return [
            (f"{k}-fold", replace(settings, train=replace(settings.train, folds=k)))
            for k in (3, 5, 7)
        ]
    if axis == "loss":
        gamma = settings.loss.focal_gamma
        base = LossConfig(clarity_enabled=settings.loss.clarity_enabled,
                          evasion_enabled=settings.loss.evasion_enabled,
                          focal_gamma=gamma)
        return [
            ("cross-entropy", replace(settings, loss=base)),
            ("class-weighted", replace(settings, loss=replace(
                base, kind=LossKind.CLASS_WEIGHTED))),
            (f"focal (gamma={gamma:g})", replace(settings, loss=replace(
                base, kind=LossKind.FOCAL))),
        ]
    raise ConfigError(f"unknown ablation axis {axis!r}")


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    if cfg.train_path is None:
        raise ConfigError("ablate command needs data.train in the config file")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    instances = load_dataset(cfg.train_path, "train")
    rows = []
    durations: dict[str, float] = {}
    for name, settings in _ablation_variants(args.axis, cfg):
        started = time.perf_counter()
        result = run_cv(instances, settings, threads=cfg.threads)
        durations[name] = time.perf_counter() - started
        summary = result.summary()
        row = {
            "variant": name,
            "clarity_mean": summary["clarity_f1_mean"],
            "clarity_std": summary["clarity_f1_std"],
            "evasion_mean": summary["evasion_f1_mean"],
            "evasion_std": summary["evasion_f1_std"],
        }
        if name == "clarity-only":
            row["evasion_mean"] = row["evasion_std"] = None
        if name == "evasion-only":
            row["clarity_mean"] = row["clarity_std"] = None
        rows.append(row)
        print(f"finished variant {name!r} in {durations[name]:.1f}s")

    if args.axis == "folds":
        base = durations["3-fold"]
        for row in rows:
            k = int(row["variant"].split("-")[0])
            row["nominal_cost"] = float(k)
            row["measured_cost"] = durations[row["variant"]] / base

    table = render_ablation_table(args.axis, rows)
    (out_dir / f"ablation_{args.axis}.txt").write_text(table, encoding="utf-8")
    write_ablation_csv(rows, out_dir / f"ablation_{args.axis}.csv")
    _write_json({"axis": args.axis, "rows": rows}, out_dir / f"ablation_{args.axis}.json")
    print(table, end="")
    return EXIT_OK


# ---------------------------
# report
# ---------------------------

def cmd_report(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    instances, kind = _load_gold(args.dataset, args.split)
    pre = cfg.settings.build_preprocessor()
    budget = cfg.settings.max_positions

    summary = summarize(instances, pre.tokenizer, token_budget=budget,
                        split=kind, bin_width=args.bin_width)
    payload = summary.to_dict()
    if kind == "annotated":
        kappas = dataset_kappas(instances)
        payload["clarity_fleiss_kappa"] = kappas["clarity"]
        payload["evasion_fleiss_kappa"] = kappas["evasion"]
    _write_json(payload, out_dir / "dataset_summary.json")
    write_histogram_csv(summary, out_dir / "token_length_histogram.csv")
    render_histogram_svg(summary, out_dir / "token_length_histogram.svg")
    write_chunk_counts_csv(instances, pre, out_dir / "chunk_counts.csv")
    print(f"{summary.count} instances; "
          f"{summary.over_budget_fraction:.1%} exceed {budget} tokens")

    if args.oof is not None:
        rows = read_predictions(args.oof)
        report = evaluate_predictions(instances, rows)
        _write_json(report.to_dict(), out_dir / "oof_report.json")
        (out_dir / "oof_report.txt").write_text(render_eval_text(report), encoding="utf-8")
        write_confusion_csvs(report, out_dir, prefix="oof_")
        write_per_class_csv(report, out_dir / "oof_per_class.csv")
        write_strata_csv(report, out_dir / "oof_agreement_strata.csv")
        print(render_eval_text(report), end="")

    print(f"report bundle written to {out_dir}")
    return EXIT_OK


# ---------------------------
# argument parsing and dispatch
# ---------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="run configuration JSON file")
    common.add_argument("--seed", type=int, default=None,
                        help="override train.base_seed")
    common.add_argument("--out", default=None, help="override output_dir")
    common.add_argument("--threads", type=int, default=None,
                        help="parallel fold workers")

    parser = argparse.ArgumentParser(
        prog="qaclarity",
        description="Long-input two-task response classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common],
                       help="stratified k-fold training with OOF predictions")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="ensemble prediction")
    p.add_argument("--checkpoints", nargs="+", required=True,
                   help="checkpoint files or a directory of .npz files")
    p.add_argument("--input", required=True, help="JSONL instances to predict")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against gold")
    p.add_argument("--gold", required=True, help="gold dataset JSONL")
    p.add_argument("--predictions", required=True, help="prediction JSONL")
    p.add_argument("--split", choices=["auto", "train", "annotated"], default="auto")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common], help="one-axis ablation sweep")
    p.add_argument("--axis", choices=["pooling", "multitask", "folds", "loss"],
                   required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", parents=[common],
                       help="dataset summary, histogram, and OOF error analysis")
    p.add_argument("--dataset", required=True, help="dataset JSONL")
    p.add_argument("--split", choices=["auto", "train", "annotated"], default="auto")
    p.add_argument("--oof", default=None, help="out-of-fold prediction JSONL")
    p.add_argument("--bin-width", type=int, default=128)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main_entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    main_entry()
