"""Experiment drivers: ablation grids, average ranks, curve and complexity reports."""
from __future__ import annotations

import csv
import itertools
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .autodiff import count_parameters
from .data import TimeSeriesDataset
from .encodings.absolute import build_table, build_tape, build_vanilla_ape, similarity_curve, write_curve_csv
from .encodings.complexity import METHODS, canonical_method, complexity_report, live_parameter_count
from .model import ConvTranNet, ModelConfig
from .training import RunRecord, TrainSettings, run_experiment

log = logging.getLogger(__name__)


def rank_row(accuracies) -> np.ndarray:
    """Rank 1 = most accurate; ties share the average of their ranks."""
    return rankdata(-np.asarray(accuracies, dtype=np.float64), method="average")


def average_ranks(acc: np.ndarray, dataset_names=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-dataset ranks and their column means.

    ``acc`` is (datasets, configs).  A dataset with any NaN cell (failed run)
    is excluded from ranking with a warning; its row of ranks is NaN.
    """
    acc = np.asarray(acc, dtype=np.float64)
    if acc.ndim != 2 or acc.shape[1] < 2:
        raise ValueError("need a (datasets, configs) matrix with at least two configs")
    ranks = np.full_like(acc, np.nan)
    for i, row in enumerate(acc):
        if np.isnan(row).any():
            name = dataset_names[i] if dataset_names is not None else i
            warnings.warn(f"dataset {name} has failed runs and is excluded from ranking")
            continue
        ranks[i] = rank_row(row)
    valid = ~np.isnan(ranks).any(axis=1)
    if not valid.any():
        raise ValueError("no dataset has a complete row of results")
    return ranks, ranks[valid].mean(axis=0)


@dataclass
class AblationResult:
    datasets: list[str]
    configs: list[tuple[str, str]]
    records: list[list[list[RunRecord | None]]]  # [dataset][config][seed]

    def accuracy(self, reduce: str = "mean") -> np.ndarray:
        out = np.full((len(self.datasets), len(self.configs)), np.nan)
        for i, row in enumerate(self.records):
            for j, runs in enumerate(row):
                vals = [r.test_accuracy for r in runs if r is not None and r.status == "ok"]
                if len(vals) != len(runs) or not vals:
                    continue
                out[i, j] = {"mean": np.mean, "best": np.max, "median": np.median}[reduce](vals)
        return out

    def ranks(self, reduce: str = "mean"):
        return average_ranks(self.accuracy(reduce), self.datasets)

    def write_csv(self, path, reduce: str = "mean") -> None:
        acc = self.accuracy(reduce)
        ranks, avg = self.ranks(reduce)
        labels = [f"{a}+{r}" for a, r in self.configs]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset"] + [f"acc:{c}" for c in labels] + [f"rank:{c}" for c in labels])
            for name, a_row, r_row in zip(self.datasets, acc, ranks):
                w.writerow([name] + [_cell(v) for v in a_row] + [_cell(v) for v in r_row])
            w.writerow(["average_rank"] + [""] * len(labels) + [_cell(v) for v in avg])


def _cell(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def _run_cell(args):
    train, test, seed, settings, abs_enc, rel_enc, overrides = args
    try:
        record, _ = run_experiment(train, test, seed=seed, settings=settings,
                                   abs_encoding=abs_enc, rel_encoding=rel_enc, **overrides)
        return record
    except Exception as exc:  # a failed cell is reported, not fatal
        log.warning("run failed (%s, %s+%s, seed %d): %s", train.name, abs_enc, rel_enc, seed, exc)
        return None


def ablate(datasets: list[tuple[TimeSeriesDataset, TimeSeriesDataset]],
           abs_grid=("none", "vanilla", "learned", "tape"),
           rel_grid=("none", "shaw", "vector", "erpe"),
           seeds=(0, 1, 2, 3, 4),
           settings: TrainSettings | None = None,
           workers: int = 1,
           **overrides) -> AblationResult:
    """Train every (abs, rel) combination on every dataset for every seed."""
    configs = list(itertools.product(abs_grid, rel_grid))
    if len(configs) < 2:
        raise ValueError("an ablation needs at least two configurations")
    settings = settings or TrainSettings()
    jobs = [
        (train, test, seed, settings, a, r, overrides)
        for train, test in datasets
        for a, r in configs
        for seed in seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(_run_cell, jobs))
    else:
        flat = [_run_cell(j) for j in jobs]
    it = iter(flat)
    records = [[[next(it) for _ in seeds] for _ in configs] for _ in datasets]
    return AblationResult([tr.name for tr, _ in datasets], configs, records)


def write_comparison_csv(path, length: int, d_model: int) -> None:
    """tAPE vs vanilla similarity curves side by side."""
    offsets, tape = similarity_curve(build_tape(length, d_model))
    _, vanilla = similarity_curve(build_vanilla_ape(length, d_model))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("offset,tape,vanilla\n")
        for k, t, v in zip(offsets, tape, vanilla):
            fh.write(f"{int(k)},{float(t)!r},{float(v)!r}\n")


def curves(kind: str, length: int, d_model: int, path) -> int:
    """Write one similarity curve CSV; returns the number of data rows."""
    table = build_table(kind, length, d_model)
    offsets, values = similarity_curve(table)
    write_curve_csv(path, offsets, values)
    return len(offsets)


def model_parameter_delta(method: str, L: int, d_z: int, d_model: int | None = None, heads: int = 8,
                          shaw_values: bool = False) -> int:
    """Trainable-count difference between a ConvTran with and without one encoding."""
    method = canonical_method(method)
    d_model = d_z if d_model is None else d_model
    base = dict(d_x=2, length=L, classes=2, d_model=d_model, d_z=d_z, heads=heads,
                abs_encoding="none", rel_encoding="none", shaw_values=shaw_values)
    field = {"tAPE": ("abs_encoding", "tape"), "VanillaAPE": ("abs_encoding", "vanilla"),
             "Learned": ("abs_encoding", "learned"), "Shaw": ("rel_encoding", "shaw"),
             "Vector": ("rel_encoding", "vector"), "eRPE": ("rel_encoding", "erpe")}[method]
    with_enc = ConvTranNet(ModelConfig(**{**base, field[0]: field[1]}))
    without = ConvTranNet(ModelConfig(**base))
    return count_parameters(with_enc) - count_parameters(without)


def complexity_table(lengths, dims, methods=METHODS, heads: int = 1, shaw_values: bool = False,
                     check_models: bool = True) -> list[dict]:
    """Reports for every (method, L, d) with live-object and live-model cross-checks.

    Each report gains ``live_params`` (encoding object alone) and, when
    ``check_models`` is set, ``model_delta`` (ConvTran with minus without the
    encoding, using ``heads`` attention heads).
    """
    if not methods:
        raise ValueError("no methods requested")
    out = []
    for method, L, d in itertools.product(methods, lengths, dims):
        rep = complexity_report(method, L, d, heads=heads, shaw_values=shaw_values)
        rep["live_params"] = live_parameter_count(method, L, d, heads=heads, shaw_values=shaw_values)
        if check_models:
            delta = model_parameter_delta(method, L, d, heads=heads, shaw_values=shaw_values)
            rep["model_delta"] = delta
        rep["consistent"] = rep["live_params"] == rep["params"] and rep.get("model_delta", rep["params"]) == rep["params"]
        out.append(rep)
    return out
