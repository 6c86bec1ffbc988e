"""Command-line entry point: ``stlstm {prepare,train,eval,gradcheck,sweep}``.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .data.power import DataError
from .estimator import STLSTMClassifier
from .experiment import (
    SPLITS,
    SWEEP_AXES,
    SWEEP_COLUMNS,
    build_datasets,
    make_estimator,
    read_datasets,
    run_gradcheck,
    run_sweep,
    write_datasets,
)
from .training import TrainingDiverged, majority_baseline

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or JSON experiment config")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. model.cell=tlstm (repeatable)")
    common.add_argument("--seed", type=int, help="global seed (data, initialization, shuffling)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="stlstm", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("prepare", parents=[common], help="build train/val/test containers and a manifest")

    p = sub.add_parser("train", parents=[common], help="train a model with early stopping")
    p.add_argument("--data", help="prepared dataset directory (default: <out>/data, built if missing)")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", help="default: <out>/checkpoint.npz")
    p.add_argument("--data", help="default: <out>/data")
    p.add_argument("--split", choices=SPLITS, default="val")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check on a tiny model")
    p.add_argument("--cell", action="append", choices=("lstm", "tlstm", "stlstm"),
                   help="cell(s) to check (default: all)")
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("sweep", parents=[common], help="paired TLSTM/STLSTM comparison along one axis")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _data(cfg, data_dir):
    data_dir = Path(data_dir) if data_dir else Path(cfg.out) / "data"
    if (data_dir / "manifest.json").is_file():
        return read_datasets(data_dir)
    splits, manifest = build_datasets(cfg)
    write_datasets(splits, manifest, data_dir)
    return splits, manifest


def cmd_prepare(cfg, args) -> int:
    splits, manifest = build_datasets(cfg)
    out = Path(cfg.out)
    write_datasets(splits, manifest, out / "data")
    cfg.dump(out / "config.json")
    print(json.dumps({"counts": manifest["counts"], "label_distribution": manifest["label_distribution"]}, sort_keys=True))
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    splits, _ = _data(cfg, args.data)
    out = Path(cfg.out)
    cfg.dump(out / "config.json")
    est = make_estimator(cfg)
    est.fit(splits["train"], X_val=splits["val"], log_path=out / "train_log.jsonl",
            checkpoint_path=out / "checkpoint.npz")
    val = est.evaluate(splits["val"])
    base = majority_baseline([s.label for s in splits["train"]], [s.label for s in splits["val"]], len(est.classes_))
    summary = {
        "best_epoch": est.best_epoch_,
        "epochs": len(est.history_),
        "val_macro_f1": val["macro_f1"],
        "val_accuracy": val["accuracy"],
        "majority_val_macro_f1": base["macro_f1"],
    }
    (out / "metrics_val.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(cfg, args) -> int:
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(cfg.out) / "checkpoint.npz"
    if not ckpt.is_file():
        raise DataError(f"checkpoint not found: {ckpt}")
    est = STLSTMClassifier.load(ckpt)
    data_dir = Path(args.data) if args.data else Path(cfg.out) / "data"
    splits, _ = read_datasets(data_dir)
    metrics = est.evaluate(splits[args.split])
    metrics["split"] = args.split
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(cfg, args) -> int:
    cells = tuple(args.cell) if args.cell else ("lstm", "tlstm", "stlstm")
    report = run_gradcheck(cfg, cells, corrupt=args.corrupt)
    tol = cfg.gradcheck.tolerance
    failed = 0
    for cell, errs in report.items():
        for name, err in errs.items():
            ok = err < tol
            failed += not ok
            print(f"{cell:7s} {name:22s} {err:.3e} {'ok' if ok else 'FAIL'}")
    print(f"{failed} tensor(s) above tolerance {tol:g}")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_sweep(cfg, args) -> int:
    out = Path(cfg.out)
    cfg.dump(out / "config.json")
    summary, _ = run_sweep(cfg, args.axis, out_dir=out, log=lambda m: logging.getLogger("stlstm").info(m))
    print(",".join(SWEEP_COLUMNS))
    for r in summary:
        print(",".join(f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in SWEEP_COLUMNS))
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors and --help end here; report their status instead of raising
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except ValueError as exc:
        print(f"invalid setting: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
