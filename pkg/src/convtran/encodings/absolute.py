"""Absolute position tables: fixed sinusoidal, length-aware sinusoidal (tAPE), learned."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..autodiff import Parameter, Tensor

LEARNED_INIT_SCALE = 0.02


class AbsKind(str, enum.Enum):
    VANILLA = "vanilla"
    TAPE = "tape"
    LEARNED = "learned"


@dataclass
class PositionTable:
    """An (L, d_model) table of per-position embeddings.

    ``values`` is a :class:`Parameter` for learned tables so the optimizer can
    update it in place, and a plain float64 array otherwise.
    """

    values: np.ndarray | Parameter
    kind: AbsKind
    trainable: bool = False

    @property
    def array(self) -> np.ndarray:
        return self.values.data if isinstance(self.values, Tensor) else self.values

    @property
    def length(self) -> int:
        return self.array.shape[0]

    @property
    def d_model(self) -> int:
        return self.array.shape[1]

    @property
    def num_parameters(self) -> int:
        return self.array.size if self.trainable else 0


def _check(length: int, d_model: int, even: bool = True) -> None:
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if d_model < 1 or (even and d_model % 2):
        raise ValueError(f"d_model must be a positive even integer, got {d_model}")


def base_frequencies(d_model: int) -> np.ndarray:
    """omega_k = 10000^(-2k/d_model) for k in [0, d_model/2)."""
    k = np.arange(d_model // 2, dtype=np.float64)
    return np.power(10000.0, -2.0 * k / d_model)


def tape_frequencies(length: int, d_model: int) -> np.ndarray:
    """Base frequencies rescaled by d_model / L."""
    return base_frequencies(d_model) * d_model / length


def _sinusoid_table(length: int, freqs: np.ndarray) -> np.ndarray:
    angles = np.arange(length, dtype=np.float64)[:, None] * freqs[None, :]
    table = np.empty((length, 2 * freqs.size), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def build_vanilla_ape(length: int, d_model: int) -> PositionTable:
    """Fixed sinusoidal table: (i, 2k) = sin(i w_k), (i, 2k+1) = cos(i w_k)."""
    _check(length, d_model)
    return PositionTable(_sinusoid_table(length, base_frequencies(d_model)), AbsKind.VANILLA)


def build_tape(length: int, d_model: int) -> PositionTable:
    """Sinusoidal table whose frequencies are scaled by ``d_model / length``.

    Identical to :func:`build_vanilla_ape` when ``d_model == length``.
    """
    _check(length, d_model)
    return PositionTable(_sinusoid_table(length, tape_frequencies(length, d_model)), AbsKind.TAPE)


def build_learned_ape(length: int, d_model: int, seed: int = 0, scale: float = LEARNED_INIT_SCALE,
                      dtype=np.float64) -> PositionTable:
    _check(length, d_model, even=False)
    rng = np.random.default_rng(seed)
    values = rng.uniform(-scale, scale, size=(length, d_model)).astype(dtype)
    return PositionTable(Parameter(values), AbsKind.LEARNED, trainable=True)


def build_table(kind: AbsKind | str, length: int, d_model: int, seed: int = 0) -> PositionTable:
    kind = AbsKind(kind)
    if kind is AbsKind.VANILLA:
        return build_vanilla_ape(length, d_model)
    if kind is AbsKind.TAPE:
        return build_tape(length, d_model)
    return build_learned_ape(length, d_model, seed)


def inject_absolute(x: Tensor, table: PositionTable) -> Tensor:
    """x + P, broadcasting over any leading batch axes of ``x``."""
    if tuple(x.shape[-2:]) != table.array.shape:
        raise ValueError(f"input {x.shape} does not match position table {table.array.shape}")
    if table.trainable:
        return x + table.values
    return x + table.array.astype(x.dtype, copy=False)


def similarity_curve(table: PositionTable | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean dot product between rows K apart, for K in -(L-1)..(L-1).

    Returns ``(offsets, values)`` with ``2L - 1`` entries each.
    """
    p = table.array if isinstance(table, PositionTable) else np.asarray(table)
    length = p.shape[0]
    if length < 2:
        raise ValueError("similarity curve needs at least two positions")
    gram = p @ p.T
    offsets = np.arange(-(length - 1), length)
    # diagonal K of the Gram matrix holds dot(row i, row i+K)
    values = np.array([np.diagonal(gram, offset=k).mean() for k in offsets])
    return offsets, values


def anisotropy(table: PositionTable | np.ndarray) -> float:
    """Mean absolute cosine similarity over distinct row pairs."""
    p = table.array if isinstance(table, PositionTable) else np.asarray(table)
    unit = p / np.linalg.norm(p, axis=1, keepdims=True)
    cos = unit @ unit.T
    n = p.shape[0]
    off = ~np.eye(n, dtype=bool)
    return float(np.abs(cos[off]).mean())


def monotonicity_violations(values: np.ndarray, tol: float = 1e-9) -> int:
    """Number of increases in a sequence that should be non-increasing."""
    return int((np.diff(values) > tol).sum())


def sign_changes(values: np.ndarray, tol: float = 1e-9) -> int:
    """Count sign flips of the discrete difference, ignoring steps within ``tol``."""
    d = np.diff(values)
    s = np.sign(np.where(np.abs(d) <= tol, 0.0, d))
    s = s[s != 0]
    return int((s[1:] != s[:-1]).sum())


def write_curve_csv(path, offsets, values) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("offset,dot_product\n")
        for k, v in zip(offsets, values):
            fh.write(f"{int(k)},{float(v)!r}\n")
