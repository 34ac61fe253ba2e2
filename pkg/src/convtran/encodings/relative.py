"""Relative position biases for self-attention.

* :class:`RelativeBias` -- one trainable scalar per offset and head, stored as a
  ``2L - 1`` vector and gathered into an ``L x L`` matrix (eRPE).
* :class:`ShawBias` -- clipped key/value embedding tables.
* :class:`VectorBias` -- one embedding per distance, combined with the queries
  and realigned by a skew instead of building an ``L x L x d`` tensor.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import Parameter, Tensor
from ..autodiff import functional as F


def relative_index(length: int) -> np.ndarray:
    """0-based index map ``idx[i, j] = i - j + L - 1`` into a ``2L - 1`` vector."""
    i = np.arange(length)
    return (i[:, None] - i[None, :] + length - 1).astype(np.intp)


class RelativeBias:
    """Per-head scalar relative weights (eRPE).

    ``weights`` has shape (heads, 2L - 1).  Pair (i, j) reads
    ``weights[:, i - j + L - 1]``; the centre element is shared by every
    diagonal entry.
    """

    def __init__(self, length: int, heads: int = 1, weights: np.ndarray | None = None, dtype=np.float64):
        if length < 1 or heads < 1:
            raise ValueError(f"length and heads must be >= 1, got {length}, {heads}")
        self.length = length
        self.heads = heads
        if weights is None:
            weights = np.zeros((heads, 2 * length - 1), dtype=dtype)
        weights = np.asarray(weights, dtype=dtype)
        if weights.shape != (heads, 2 * length - 1):
            raise ValueError(f"weights must have shape {(heads, 2 * length - 1)}, got {weights.shape}")
        self.weights = Parameter(weights)
        self.index_cache: np.ndarray | None = None

    @property
    def num_parameters(self) -> int:
        return self.weights.size

    def indices(self) -> np.ndarray:
        return self.index_cache if self.index_cache is not None else relative_index(self.length)

    def cache_indices(self) -> "RelativeBias":
        if self.index_cache is None:
            self.index_cache = relative_index(self.length)
        return self

    def materialize(self, head: int | None = None) -> Tensor:
        """Gather the (L, L) bias of one head, or (heads, L, L) when ``head`` is None."""
        idx = self.indices()
        if head is None:
            return F.take(self.weights, idx, axis=1)
        if not 0 <= head < self.heads:
            raise IndexError(f"head {head} out of range for {self.heads} heads")
        return F.take(self.weights[head], idx, axis=0)


def erpe_new(length: int, heads: int = 1, seed: int = 0, init: str = "zeros", scale: float = 0.02,
             dtype=np.float64) -> RelativeBias:
    """Create an eRPE bias.  ``init="zeros"`` (default) or ``"uniform"`` in +-scale."""
    if init == "zeros":
        w = np.zeros((heads, 2 * length - 1), dtype=dtype)
    elif init == "uniform":
        w = np.random.default_rng(seed).uniform(-scale, scale, size=(heads, 2 * length - 1))
    else:
        raise ValueError(f"unknown init {init!r}")
    return RelativeBias(length, heads, w, dtype=dtype)


def erpe_materialize(bias: RelativeBias, head: int) -> Tensor:
    return bias.materialize(head)


def erpe_cache_indices(bias: RelativeBias) -> RelativeBias:
    return bias.cache_indices()


# -- Shaw -----------------------------------------------------------------


def clip_index(length: int, clip_k: int) -> np.ndarray:
    """``clip(i - j, k) + k``: row of the (2k + 1)-row table used by pair (i, j)."""
    i = np.arange(length)
    return (np.clip(i[:, None] - i[None, :], -clip_k, clip_k) + clip_k).astype(np.intp)


class ShawBias:
    """Clipped relative embeddings added to keys (and optionally values).

    Tables have ``2 * clip_k + 1`` rows; the default ``clip_k = L - 1``
    disables clipping.
    """

    def __init__(self, length: int, d_z: int, clip_k: int | None = None, values: bool = True,
                 seed: int = 0, scale: float = 0.02, dtype=np.float64):
        clip_k = length - 1 if clip_k is None else clip_k
        if clip_k < 0:
            raise ValueError("clip_k must be >= 0")
        self.length = length
        self.d_z = d_z
        self.clip_k = clip_k
        rng = np.random.default_rng(seed)
        rows = 2 * clip_k + 1
        self.keys_table = Parameter(rng.uniform(-scale, scale, size=(rows, d_z)).astype(dtype))
        self.values_table = (
            Parameter(rng.uniform(-scale, scale, size=(rows, d_z)).astype(dtype)) if values else None
        )

    @property
    def num_parameters(self) -> int:
        n = self.keys_table.size
        return n + (self.values_table.size if self.values_table is not None else 0)

    def index(self) -> np.ndarray:
        return clip_index(self.length, self.clip_k)


def _gather_rows(rel: Tensor, idx: np.ndarray) -> Tensor:
    """out[..., i, j] = rel[..., i, idx[i, j]] for rel of shape (..., L, R)."""
    length, width = rel.shape[-2:]
    flat = rel.reshape(*rel.shape[:-2], length * width)
    flat_idx = np.arange(length)[:, None] * width + idx
    return F.take(flat, flat_idx, axis=-1)


def shaw_attention_scores(q: Tensor, k: Tensor, keys_table: Tensor, idx: np.ndarray, scale: float) -> Tensor:
    """Pre-softmax scores ``q_i . (k_j + pK[idx[i, j]]) * scale``.

    ``q``, ``k`` are (..., L, d); ``keys_table`` is (R, d), or (heads, R, d)
    to broadcast against a head axis of ``q``.
    """
    if q.shape != k.shape or q.shape[-1] != keys_table.shape[-1]:
        raise ValueError(f"shape mismatch: q {q.shape}, k {k.shape}, table {keys_table.shape}")
    content = q @ k.swapaxes(-1, -2)
    rel = _gather_rows(q @ keys_table.swapaxes(-1, -2), idx)
    return (content + rel) * scale


def shaw_values_mix(alpha: Tensor, v: Tensor, values_table: Tensor | None, idx: np.ndarray) -> Tensor:
    """``z_i = sum_j alpha_ij (v_j + pV[idx[i, j]])``.

    Builds the (L, L, d) gathered value table, as the method requires.
    """
    out = alpha @ v
    if values_table is None:
        return out
    length = alpha.shape[-1]
    gathered = F.take(values_table, idx, axis=values_table.ndim - 2)  # ([heads,] L, L, d)
    a = alpha.reshape(*alpha.shape[:-1], 1, length)  # (..., L, 1, L)
    rel = (a @ gathered).reshape(out.shape)
    return out + rel


# -- Vector (skewed) ------------------------------------------------------


class VectorBias:
    """One embedding per relative distance ``|i - j|`` in [0, L).

    The embedding for signed offset ``j - i`` is ``P[|j - i|]``, so the table
    keeps ``L * d_z`` parameters while serving both attention directions.
    """

    def __init__(self, length: int, d_z: int, seed: int = 0, scale: float = 0.02, dtype=np.float64):
        self.length = length
        self.d_z = d_z
        rng = np.random.default_rng(seed)
        self.embeddings = Parameter(rng.uniform(-scale, scale, size=(length, d_z)).astype(dtype))

    @property
    def num_parameters(self) -> int:
        return self.embeddings.size

    def offset_rows(self) -> np.ndarray:
        """Row of ``P`` used by skew column c (offset ``c - (L - 1)``)."""
        return np.abs(np.arange(2 * self.length - 1) - (self.length - 1)).astype(np.intp)


def vector_skew(qp: Tensor) -> Tensor:
    """Align (..., L, 2L-1) query-embedding products into (..., L, L) relative logits."""
    return F.skew(qp)


def vector_relative_logits(q: Tensor, embeddings: Tensor, rows: np.ndarray) -> Tensor:
    """``S_rel[i, j] = q_i . P[|j - i|]`` via an O(L d + L^2) skew.

    ``embeddings`` is (L, d) or (heads, L, d).
    """
    expanded = F.take(embeddings, rows, axis=embeddings.ndim - 2)  # ([heads,] 2L-1, d)
    return vector_skew(q @ expanded.swapaxes(-1, -2))
