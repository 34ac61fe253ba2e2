"""UEA ``.ts`` ingestion, normalization, splitting and synthetic fixtures."""
from __future__ import annotations

import dataclasses
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_container, save_container


class TsFormatError(ValueError):
    """Malformed ``.ts`` content; the message carries the offending line number."""

    def __init__(self, path, line_no: int, msg: str):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.line_no = line_no


@dataclass
class TimeSeriesDataset:
    samples: np.ndarray  # (n, d_x, L)
    labels: np.ndarray  # (n,) ints in [0, c)
    class_names: list[str]
    name: str = ""
    equal_length: bool = True
    lengths: np.ndarray | None = None  # original length of each sample
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 3:
            raise ValueError(f"samples must be (n, d_x, L), got {self.samples.shape}")
        if len(self.samples) < 1:
            raise ValueError("a dataset needs at least one sample")
        if self.labels.shape != (len(self.samples),):
            raise ValueError("one label per sample required")
        if self.labels.min() < 0 or self.labels.max() >= len(self.class_names):
            raise ValueError("labels must index class_names")
        if self.lengths is None:
            self.lengths = np.full(len(self.samples), self.samples.shape[2], dtype=np.int64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d_x(self) -> int:
        return self.samples.shape[1]

    @property
    def length(self) -> int:
        return self.samples.shape[2]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, idx) -> "TimeSeriesDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return dataclasses.replace(self, samples=self.samples[idx], labels=self.labels[idx],
                                   lengths=self.lengths[idx], meta=dict(self.meta))

    def equals(self, other: "TimeSeriesDataset") -> bool:
        return (
            self.name == other.name
            and self.class_names == other.class_names
            and self.equal_length == other.equal_length
            and np.array_equal(self.samples, other.samples, equal_nan=True)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.lengths, other.lengths)
        )


_BOOL = {"true": True, "false": False}


def _parse_bool(path, line_no, key, value) -> bool:
    v = value.strip().lower()
    if v not in _BOOL:
        raise TsFormatError(path, line_no, f"@{key} expects true/false, got {value!r}")
    return _BOOL[v]


def _parse_int(path, line_no, key, value) -> int:
    try:
        out = int(value.strip())
    except ValueError:
        raise TsFormatError(path, line_no, f"@{key} expects an integer, got {value!r}") from None
    if out < 1:
        raise TsFormatError(path, line_no, f"@{key} must be positive")
    return out


def parse_ts(path) -> TimeSeriesDataset:
    """Read a UEA/UCR ``.ts`` classification file.

    Dimensions become channels.  Series shorter than the longest one are
    right-padded with zeros; their true lengths are kept in ``lengths``.
    """
    header: dict = {}
    class_names: list[str] | None = None
    series: list[list[np.ndarray]] = []
    labels: list[int] = []
    record_lines: list[int] = []
    in_data = False
    n_dims: int | None = None
    line_no = 0

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                if not line.startswith("@"):
                    raise TsFormatError(path, line_no, "expected a @directive before @data")
                key, _, value = line[1:].partition(" ")
                key = key.lower()
                if key == "data":
                    if class_names is None:
                        raise TsFormatError(path, line_no, "@classLabel must be declared before @data")
                    in_data = True
                    n_dims = header.get("dimensions")
                    if n_dims is None and header.get("univariate"):
                        n_dims = 1
                elif key == "problemname":
                    header["problem_name"] = value.strip()
                elif key == "timestamps":
                    if _parse_bool(path, line_no, key, value):
                        raise TsFormatError(path, line_no, "timestamped series are not supported")
                elif key in ("missing", "univariate", "equallength"):
                    header[key] = _parse_bool(path, line_no, key, value)
                elif key in ("dimension", "dimensions"):
                    header["dimensions"] = _parse_int(path, line_no, key, value)
                elif key == "serieslength":
                    header["series_length"] = _parse_int(path, line_no, key, value)
                elif key == "classlabel":
                    tokens = value.split()
                    if not tokens or tokens[0].lower() != "true":
                        raise TsFormatError(path, line_no, "only classification files (@classLabel true ...) are supported")
                    if len(tokens) < 2:
                        raise TsFormatError(path, line_no, "@classLabel true needs at least one label")
                    class_names = tokens[1:]
                elif key == "targetlabel":
                    raise TsFormatError(path, line_no, "regression files (@targetLabel) are not supported")
                else:
                    raise TsFormatError(path, line_no, f"unknown directive @{key}")
                continue

            fields = line.split(":")
            label = fields[-1].strip()
            dims = fields[:-1]
            if n_dims is None:
                n_dims = len(dims)
            if len(dims) != n_dims:
                raise TsFormatError(path, line_no, f"expected {n_dims} dimensions, found {len(dims)}")
            if label not in class_names:
                raise TsFormatError(path, line_no, f"class label {label!r} not declared in @classLabel")
            values = []
            for d in dims:
                try:
                    arr = np.array([np.nan if t.strip() == "?" else float(t) for t in d.split(",")])
                except ValueError as exc:
                    raise TsFormatError(path, line_no, f"bad numeric value ({exc})") from None
                if np.isnan(arr).any() and not header.get("missing", False):
                    raise TsFormatError(path, line_no, "missing value in a file declaring @missing false")
                values.append(arr)
            series.append(values)
            labels.append(class_names.index(label))
            record_lines.append(line_no)

    # end-of-file problems are reported at the last line read
    if not in_data:
        raise TsFormatError(path, line_no, "no @data section")
    if not series:
        raise TsFormatError(path, line_no, "empty @data section")

    lengths = np.array([max(len(v) for v in s) for s in series], dtype=np.int64)
    expected = header.get("series_length")
    if header.get("equallength") and expected is not None and (lengths != expected).any():
        bad = int(np.argmax(lengths != expected))
        raise TsFormatError(path, record_lines[bad], f"sample {bad} has length {lengths[bad]}, expected {expected}")
    max_len = int(lengths.max())
    samples = np.zeros((len(series), n_dims, max_len))
    for i, s in enumerate(series):
        for c, v in enumerate(s):
            samples[i, c, : len(v)] = v
    equal = bool((lengths == max_len).all()) and all(len(v) == max_len for s in series for v in s)
    name = header.get("problem_name") or os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return TimeSeriesDataset(samples, np.array(labels), list(class_names), name=name,
                             equal_length=equal, lengths=lengths,
                             meta={"declared_equal_length": header.get("equallength")})


def _fmt(x: float) -> str:
    return repr(float(x))


def write_ts(ds: TimeSeriesDataset, path) -> None:
    """Serialize to ``.ts``; only the first ``lengths[i]`` values of each sample are written."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"@problemName {ds.name}\n")
        fh.write("@timeStamps false\n")
        fh.write(f"@missing {'true' if np.isnan(ds.samples).any() else 'false'}\n")
        fh.write(f"@univariate {'true' if ds.d_x == 1 else 'false'}\n")
        fh.write(f"@dimensions {ds.d_x}\n")
        fh.write(f"@equalLength {'true' if ds.equal_length else 'false'}\n")
        if ds.equal_length:
            fh.write(f"@seriesLength {ds.length}\n")
        fh.write(f"@classLabel true {' '.join(ds.class_names)}\n")
        fh.write("@data\n")
        for x, y, n in zip(ds.samples, ds.labels, ds.lengths):
            dims = [",".join("?" if np.isnan(v) else _fmt(v) for v in channel[:n]) for channel in x]
            fh.write(":".join(dims) + f":{ds.class_names[y]}\n")


def pad_to_length(ds: TimeSeriesDataset, length: int) -> TimeSeriesDataset:
    """Zero right-pad (or truncate) every sample to ``length`` time steps."""
    cur = ds.length
    if length == cur:
        return ds
    if length > cur:
        samples = np.zeros((ds.n, ds.d_x, length))
        samples[:, :, :cur] = ds.samples
    else:
        samples = ds.samples[:, :, :length].copy()
    lengths = np.minimum(ds.lengths, length)
    return dataclasses.replace(ds, samples=samples, lengths=lengths,
                               equal_length=bool((lengths == length).all()), meta=dict(ds.meta))


def znormalize(ds: TimeSeriesDataset, eps: float = 1e-8) -> TimeSeriesDataset:
    """Per-sample, per-channel z-normalization over each sample's true length.

    Channels with standard deviation below ``eps`` become zeros; padding stays zero.
    """
    out = np.zeros_like(ds.samples)
    for i, (x, n) in enumerate(zip(ds.samples, ds.lengths)):
        seg = x[:, :n]
        mu = seg.mean(axis=1, keepdims=True)
        sd = seg.std(axis=1, keepdims=True)
        scaled = np.where(sd < eps, 0.0, (seg - mu) / np.where(sd < eps, 1.0, sd))
        out[i, :, :n] = scaled
    meta = dict(ds.meta, znormalized=True)
    return dataclasses.replace(ds, samples=out, meta=meta)


def stratified_split(ds: TimeSeriesDataset, fraction: float = 0.8, seed: int = 0):
    """Split into (train, val) preserving class proportions.

    Each class with at least two samples keeps at least one sample on each
    side.  A singleton class goes to train with a warning.  Returns datasets
    whose samples keep their original relative order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for c in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == c)
        if len(members) == 0:
            continue
        if len(members) == 1:
            warnings.warn(f"class {ds.class_names[c]!r} has a single sample; it stays in the training split")
            train_idx.extend(members)
            continue
        members = rng.permutation(members)
        n_train = int(min(len(members) - 1, max(1, round(fraction * len(members)))))
        train_idx.extend(members[:n_train])
        val_idx.extend(members[n_train:])
    train_idx, val_idx = np.sort(train_idx), np.sort(val_idx)
    return ds.subset(train_idx), ds.subset(val_idx)


def synth_order_task(n: int, L: int, seed: int = 0, noise: float = 0.1) -> TimeSeriesDataset:
    """Single-channel noise with one unit pulse.

    Class 0 puts the pulse uniformly in the first half of the series, class 1
    in the second half.  Local content is identical across classes, so only
    the pulse position separates them.
    """
    if L < 2 or L % 2:
        raise ValueError("L must be a positive even integer")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2)
    half = L // 2
    pos = rng.integers(0, half, size=n) + labels * half
    x = noise * rng.standard_normal((n, 1, L))
    x[np.arange(n), 0, pos] += 1.0
    return TimeSeriesDataset(x, labels, ["first_half", "second_half"], name=f"SynthOrder{L}",
                             meta={"pulse_index": pos.tolist(), "seed": seed})


def save_dataset(path, ds: TimeSeriesDataset) -> None:
    meta = {"name": ds.name, "class_names": ds.class_names, "equal_length": ds.equal_length,
            "meta": ds.meta}
    save_container(path, "dataset", meta, {"samples": ds.samples, "labels": ds.labels, "lengths": ds.lengths})


def load_dataset(path) -> TimeSeriesDataset:
    meta, arrays = load_container(path, kind="dataset")
    return TimeSeriesDataset(arrays["samples"], arrays["labels"], meta["class_names"], name=meta["name"],
                             equal_length=meta["equal_length"], lengths=arrays["lengths"], meta=meta["meta"])


def find_uea_split(name: str, split: str, data_dir=None):
    """Locate ``<name>/<name>_<SPLIT>.ts`` under ``data_dir``, ``$CONVTRAN_DATA`` or ``./data``."""
    roots = [data_dir] if data_dir else []
    if os.environ.get("CONVTRAN_DATA"):
        roots.append(os.environ["CONVTRAN_DATA"])
    roots.append(os.path.join(os.getcwd(), "data"))
    roots.append(os.path.join(os.path.dirname(__file__), "..", "..", "data"))
    roots = list(dict.fromkeys(os.path.normpath(os.path.abspath(r)) for r in roots))
    fname = f"{name}_{split.upper()}.ts"
    for root in roots:
        for cand in (os.path.join(root, name, fname), os.path.join(root, fname)):
            if os.path.isfile(cand):
                return os.path.abspath(cand)
    raise FileNotFoundError(f"{fname} not found under any of {roots}")
