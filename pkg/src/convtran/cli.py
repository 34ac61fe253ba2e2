"""Command line entry point: ``convtran {train,eval,ablate,curves,complexity}``.

Config files are plain ``key = value`` lines (``#`` starts a comment).  Keys
are :class:`~convtran.model.ModelConfig` fields (``d_model``, ``heads``,
``abs_encoding`` ...) or training settings (``epochs``, ``patience``,
``batch``, ``lr``, ``val_fraction``, ``znorm``, ``seed``).  Command line
flags override the file.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys

from . import harness
from .data import find_uea_split, parse_ts, stratified_split, synth_order_task
from .encodings.complexity import METHODS
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .training import TrainSettings, best_of, evaluate, prepare, run_experiment

MODEL_KEYS = {f.name: f for f in dataclasses.fields(ModelConfig)}
SETTING_KEYS = {f.name: f for f in dataclasses.fields(TrainSettings)}
_NOT_CONFIGURABLE = {"d_x", "length", "classes"}


def _coerce(value: str, default):
    if isinstance(default, bool):
        v = value.strip().lower()
        if v not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {value!r}")
        return v in ("true", "1", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if value.strip().lower() in ("none", ""):
        return None
    try:
        return int(value)
    except ValueError:
        return value.strip()


def read_config(path) -> tuple[dict, dict, int | None]:
    """Parse a key-value config file into (model overrides, settings overrides, seed)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[run]\n" + fh.read())
    model, settings, seed = {}, {}, None
    probe = ModelConfig(d_x=1, length=2, classes=2)
    for key, raw in parser["run"].items():
        if key == "seed":
            seed = int(raw)
        elif key in SETTING_KEYS:
            settings[key] = _coerce(raw, getattr(TrainSettings(), key))
        elif key in MODEL_KEYS and key not in _NOT_CONFIGURABLE:
            model[key] = _coerce(raw, getattr(probe, key))
        else:
            raise ValueError(f"{path}: unknown config key {key!r}")
    return model, settings, seed


def _load_pair(spec: str, data_dir=None, seed: int = 0):
    """Resolve ``--dataset``: a UEA name, a ``*_TRAIN.ts`` path, or ``synth-order[:n[:L]]``."""
    if spec.startswith("synth-order"):
        parts = spec.split(":")
        n = int(parts[1]) if len(parts) > 1 else 600
        length = int(parts[2]) if len(parts) > 2 else 64
        full = synth_order_task(n, length, seed=seed)
        return stratified_split(full, 0.5, seed=seed)
    if spec.endswith(".ts"):
        train_path = spec
        test_path = spec.replace("_TRAIN.ts", "_TEST.ts")
        if test_path == train_path:
            raise FileNotFoundError(f"cannot infer the test file for {spec}; expected a *_TRAIN.ts path")
    else:
        train_path = find_uea_split(spec, "TRAIN", data_dir)
        test_path = find_uea_split(spec, "TEST", data_dir)
    return parse_ts(train_path), parse_ts(test_path)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data-dir", help="root holding <Name>/<Name>_TRAIN.ts files")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--no-znorm", action="store_true", help="skip per-sample z-normalization")
    p.add_argument("--out", default="runs", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convtran", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate one configuration")
    p.add_argument("--dataset", required=True)
    p.add_argument("--abs", choices=["none", "vanilla", "learned", "tape"])
    p.add_argument("--rel", choices=["none", "shaw", "vector", "erpe"])
    p.add_argument("--seed", type=int, nargs="+", help="one or more seeds; best-of is reported")
    _common(p)

    p = sub.add_parser("eval", help="score a saved checkpoint on a dataset's test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--data-dir")
    p.add_argument("--no-znorm", action="store_true")
    p.add_argument("--out", help="write the result JSON here instead of stdout")

    p = sub.add_parser("ablate", help="grid over absolute x relative encodings with average ranks")
    p.add_argument("--dataset", nargs="+", required=True)
    p.add_argument("--abs", nargs="+", default=["none", "vanilla", "learned", "tape"])
    p.add_argument("--rel", nargs="+", default=["none", "shaw", "vector", "erpe"])
    p.add_argument("--seed", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--reduce", choices=["mean", "best", "median"], default="mean")
    _common(p)

    p = sub.add_parser("curves", help="similarity-vs-offset CSV for a position table")
    p.add_argument("--kind", choices=["vanilla", "tape", "learned", "compare"], default="compare")
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--out", required=True, help="output CSV path (or directory with --figure)")
    p.add_argument("--figure", action="store_true",
                   help="write the tAPE-vs-vanilla pair for L=1000 and L=30 (d_model=128) into --out")

    p = sub.add_parser("complexity", help="parameter/memory/compute report per encoding")
    p.add_argument("--length", type=int, nargs="+", default=[30])
    p.add_argument("--d", type=int, nargs="+", default=[64])
    p.add_argument("--methods", nargs="*", default=list(METHODS))
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--shaw-values", action="store_true")
    p.add_argument("--out", help="write JSON here instead of stdout")
    return parser


def _settings_and_overrides(args) -> tuple[TrainSettings, dict, list[int] | None]:
    model, settings, seed = ({}, {}, None)
    if getattr(args, "config", None):
        model, settings, seed = read_config(args.config)
    for key in ("epochs", "patience", "batch", "lr"):
        if getattr(args, key, None) is not None:
            settings[key] = getattr(args, key)
    if getattr(args, "no_znorm", False):
        settings["znorm"] = False
    seeds = [seed] if seed is not None else None
    return TrainSettings(**settings), model, seeds


def _emit(text: str, path=None) -> None:
    if path:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_train(args) -> int:
    settings, model, cfg_seeds = _settings_and_overrides(args)
    if args.abs:
        model["abs_encoding"] = args.abs
    if args.rel:
        model["rel_encoding"] = args.rel
    seeds = args.seed or cfg_seeds or [0]
    os.makedirs(args.out, exist_ok=True)
    records = []
    for seed in seeds:
        train, test = _load_pair(args.dataset, args.data_dir, seed=seed)
        record, net = run_experiment(train, test, seed=seed, settings=settings, **model)
        records.append(record)
        stem = os.path.join(args.out, f"{record.dataset}_seed{seed}")
        _emit(record.to_json(), stem + ".json")
        save_checkpoint(stem + ".npz", net, extra={"dataset": record.dataset, "znorm": settings.znorm})
        logging.info("%s seed %d: accuracy %.4f", record.dataset, seed, record.test_accuracy)
    best = best_of(records)
    summary = {
        "dataset": best.dataset,
        "seeds": seeds,
        "accuracies": [r.test_accuracy for r in records],
        "best_accuracy": best.test_accuracy,
        "mean_accuracy": sum(r.test_accuracy for r in records) / len(records),
        "best_seed": best.seed,
    }
    _emit(json.dumps(summary, indent=2), os.path.join(args.out, f"{best.dataset}_summary.json"))
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args) -> int:
    net = load_checkpoint(args.checkpoint)
    train, test = _load_pair(args.dataset, args.data_dir, seed=net.config.seed)
    _, test = prepare(train, test, znorm=not args.no_znorm)
    acc, loss = evaluate(net, test)
    _emit(json.dumps({"dataset": test.name, "test_accuracy": acc, "test_loss": loss}, indent=2), args.out)
    return 0


def cmd_ablate(args) -> int:
    settings, model, cfg_seeds = _settings_and_overrides(args)
    pairs = [_load_pair(name, args.data_dir, seed=0) for name in args.dataset]
    result = harness.ablate(pairs, args.abs, args.rel, args.seed or cfg_seeds, settings,
                            workers=args.workers, **model)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "ranks.csv")
    result.write_csv(path, args.reduce)
    for reduce in ("mean", "best"):
        result.write_csv(os.path.join(args.out, f"ranks_{reduce}.csv"), reduce)
    print(open(path, encoding="utf-8").read(), end="")
    return 0


def cmd_curves(args, parser) -> int:
    if args.figure:
        os.makedirs(args.out, exist_ok=True)
        for length in (1000, 30):
            harness.write_comparison_csv(os.path.join(args.out, f"tape_vs_vanilla_L{length}_d{args.d_model}.csv"),
                                         length, args.d_model)
        return 0
    if args.length is None or args.length < 2:
        parser.error("--length must be at least 2")
    if args.kind == "compare":
        harness.write_comparison_csv(args.out, args.length, args.d_model)
    else:
        harness.curves(args.kind, args.length, args.d_model, args.out)
    return 0


def cmd_complexity(args, parser) -> int:
    if not args.methods:
        parser.error("--methods needs at least one method")
    reports = harness.complexity_table(args.length, args.d, args.methods, heads=args.heads,
                                       shaw_values=args.shaw_values)
    _emit(json.dumps(reports, indent=2), args.out)
    return 0 if all(r["consistent"] for r in reports) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "out", None) == "":
        parser.error("--out must be a non-empty path")
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "ablate":
            return cmd_ablate(args)
        if args.command == "curves":
            return cmd_curves(args, parser)
        return cmd_complexity(args, parser)
    except (OSError, ValueError) as exc:
        print(f"convtran: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
