"""Command-line interface: synth / train / evaluate / compare / inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
Every error path prints one machine-parseable line to stderr of the form
``error: <kind>: <reason>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, models, store, training
from .training import TrainingDivergedError


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config(path: str | None) -> tuple[dict, dict]:
    """Read the shared JSON config ({"model": {...}, "training": {...}})."""
    if path is None:
        return {}, {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise UsageError("config document must be a JSON object")
    return dict(doc.get("model", {})), dict(doc.get("training", {}))


def _model_config(args, n_classes: int, model_overrides: dict) -> models.ModelConfig:
    overrides = dict(model_overrides)
    overrides["n_classes"] = n_classes
    overrides["variant"] = args.variant
    try:
        return models.ModelConfig.from_dict(overrides)
    except models.ConfigError as exc:
        raise UsageError(str(exc))


def _train_config(args, training_overrides: dict) -> training.TrainConfig:
    overrides = dict(training_overrides)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    try:
        return training.TrainConfig.from_dict(overrides)
    except ValueError as exc:
        raise UsageError(str(exc))


def _read_dataset(path: str) -> store.EmbeddingDataset:
    if not Path(path).exists():
        raise store.FormatError(f"dataset file not found: {path}")
    return store.read_dataset(path)


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_synth(args) -> int:
    if args.classes < 2:
        raise UsageError(f"--classes must be >= 2, got {args.classes}")
    if args.samples < args.classes:
        raise UsageError(f"--samples must be >= --classes, got {args.samples}")
    if args.separation < 0:
        raise UsageError(f"--separation must be nonnegative, got {args.separation}")
    ds = store.synth_generate(
        n_samples=args.samples,
        n_classes=args.classes,
        n_layers=args.layers,
        hidden=args.hidden,
        separation=args.separation,
        seed=args.seed,
    )
    manifest = store.write_dataset(
        ds,
        args.out,
        source=f"synthetic(separation={args.separation}, seed={args.seed})",
        model_id="synthetic",
    )
    print(f"wrote {args.out}: {ds.n_samples} samples, {ds.n_classes} classes, sha256={manifest.sha256[:12]}")
    return 0


def _split_indices(n: int, seed: int, val_fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    return perm[n_val:], perm[:n_val]


def cmd_train(args) -> int:
    model_overrides, training_overrides = _load_config(args.config)
    ds = _read_dataset(args.data)
    mcfg = _model_config(args, ds.n_classes, model_overrides)
    tcfg = _train_config(args, training_overrides)

    if args.folds is not None:
        if args.folds < 2:
            raise UsageError(f"--folds must be >= 2, got {args.folds}")
        if args.out_params:
            print("note: --out-params applies to single-split training; skipped", file=sys.stderr)
        report = evaluation.run_cv(
            ds, mcfg, tcfg, seeds=[tcfg.seed], k=args.folds, dataset=args.data
        )
        if report.failures:
            first = report.failures[0]
            print(f"error: training: fold {first['fold']} diverged at step {first['step']}", file=sys.stderr)
            return 3
        accuracies = report.accuracies[0]
        summary = {
            "variant": mcfg.variant,
            "dataset": args.data,
            "seed": tcfg.seed,
            "folds": args.folds,
            "accuracies": accuracies,
            "accuracy": report.grand_mean,
        }
        print(f"cv accuracy (k={args.folds}): {report.grand_mean:.4f}")
    else:
        train_idx, val_idx = _split_indices(ds.n_samples, tcfg.seed)
        result = training.train_fold(
            ds.stacks[train_idx], ds.labels[train_idx], ds.stacks[val_idx], ds.labels[val_idx],
            mcfg, tcfg,
        )
        summary = {
            "variant": mcfg.variant,
            "dataset": args.data,
            "seed": tcfg.seed,
            "train_samples": int(train_idx.size),
            "val_samples": int(val_idx.size),
            "steps": tcfg.total_steps,
            "final_loss": result.losses[-1],
            "accuracy": result.accuracy,
        }
        if args.out_params:
            models.save_checkpoint(args.out_params, result.params, mcfg)
        print(f"validation accuracy: {result.accuracy:.4f}")

    if args.out_report:
        _write_json(summary, args.out_report)
    return 0


def cmd_evaluate(args) -> int:
    model_overrides, training_overrides = _load_config(args.config)
    ds = _read_dataset(args.data)
    mcfg = _model_config(args, ds.n_classes, model_overrides)
    tcfg = _train_config(args, training_overrides)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    except ValueError:
        raise UsageError(f"--seeds must be a comma-separated integer list, got {args.seeds!r}")
    if not seeds:
        raise UsageError("--seeds must name at least one seed")
    if args.folds < 2:
        raise UsageError(f"--folds must be >= 2, got {args.folds}")

    report = evaluation.run_cv(
        ds,
        mcfg,
        tcfg,
        seeds=seeds,
        k=args.folds,
        n_workers=args.parallel_folds,
        model=args.name,
        dataset=args.data,
    )
    _write_json(report.to_json_dict(), args.out)
    if report.grand_mean is not None:
        print(f"grand mean over {len(seeds)} seeds x {args.folds} folds: {report.grand_mean:.4f}")
    if report.failures:
        print(f"warning: {len(report.failures)} fold(s) diverged and were excluded", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    if len(args.results) < 2:
        raise UsageError(f"need at least 2 result files, got {len(args.results)}")
    reports = []
    for path in args.results:
        if not Path(path).exists():
            raise store.FormatError(f"result file not found: {path}")
        try:
            reports.append(evaluation.EvalReport.from_json_dict(json.loads(Path(path).read_text())))
        except (json.JSONDecodeError, KeyError) as exc:
            raise store.FormatError(f"malformed report {path}: {exc}")
    try:
        result = evaluation.compare_all(reports, alpha=args.alpha, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.out:
        _write_json(result.to_json_dict(), args.out)
    print(result.to_text())
    print(f"adjusted alpha: {result.adjusted_alpha:.6g} ({result.n_comparisons} comparisons)")
    return 0


def cmd_inspect(args) -> int:
    ds = _read_dataset(args.data)
    checksum = store.file_checksum(args.data)
    print(f"n_samples:  {ds.n_samples}")
    print(f"n_layers:   {ds.n_layers}")
    print(f"hidden:     {ds.hidden}")
    print(f"n_classes:  {ds.n_classes}")
    for cls, count in enumerate(ds.class_counts()):
        print(f"  class {cls}: {count}")
    print(f"sha256:     {checksum}")
    manifest = store.manifest_path(args.data)
    if manifest.exists():
        recorded = store.Manifest.load(args.data)
        match = "matches" if recorded.sha256 == checksum else "MISMATCH"
        print(f"manifest:   {manifest.name} (checksum {match})")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="clstack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=int, default=12)
    p.add_argument("--hidden", type=int, default=768)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model on a train/val split")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=models.VARIANTS, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=None, help="run k-fold CV instead of a 90/10 split")
    p.add_argument("--out-params", default=None)
    p.add_argument("--out-report", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="k-fold cross-validation over several seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=models.VARIANTS, required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--config", default=None)
    p.add_argument("--name", default=None, help="model label used in reports (default: variant)")
    p.add_argument("--parallel-folds", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="pairwise ASO comparison of evaluation reports")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect", help="print header fields and label statistics")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    except (store.FormatError, store.CorruptionError, store.ValidationError, models.CheckpointError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"error: training: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
