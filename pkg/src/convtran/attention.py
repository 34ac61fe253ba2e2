"""Multi-head self-attention with optional relative position bias.

Scores are scaled by ``1/sqrt(d_z)`` using the full attention width, also in
multi-head mode.  The eRPE bias is added *after* the softmax, so rows of
``A + W`` need not sum to one.
"""
from __future__ import annotations

import math

import numpy as np

from .autodiff import Linear, Module, Tensor
from .autodiff import functional as F
from .encodings.relative import (
    RelativeBias,
    ShawBias,
    VectorBias,
    erpe_new,
    shaw_attention_scores,
    shaw_values_mix,
    vector_relative_logits,
)

RELATIVE_KINDS = ("none", "erpe", "shaw", "vector")


def scaled_dot_scores(q: Tensor, k: Tensor, d_z: int | None = None) -> Tensor:
    """e_ij = q_i . k_j / sqrt(d_z); ``d_z`` defaults to the last axis of ``q``."""
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"inner dimensions differ: {q.shape} vs {k.shape}")
    d_z = q.shape[-1] if d_z is None else d_z
    return (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(d_z))


def softmax_rows(e: Tensor) -> Tensor:
    return F.softmax(e, axis=-1)


class AttentionLayer(Module):
    """Fused-qkv multi-head self-attention.

    Parameters
    ----------
    d_model, d_z : int
        Input width and attention width; ``d_z`` must divide by ``heads``.
    length : int
        Sequence length, needed to size relative biases.
    relative : {"none", "erpe", "shaw", "vector"}
    erpe_mix : {"value", "input"}
        What the eRPE weights mix: value projections (default) or the raw
        layer inputs split into heads (requires ``d_model == d_z``).
    """

    def __init__(self, d_model: int, d_z: int, heads: int, length: int, rng: np.random.Generator,
                 relative: str = "none", erpe_mix: str = "value", shaw_values: bool = False,
                 clip_k: int | None = None, dtype=np.float64):
        if d_z % heads:
            raise ValueError(f"d_z={d_z} is not divisible by heads={heads}")
        if relative not in RELATIVE_KINDS:
            raise ValueError(f"relative must be one of {RELATIVE_KINDS}, got {relative!r}")
        if erpe_mix not in ("value", "input"):
            raise ValueError(f"erpe_mix must be 'value' or 'input', got {erpe_mix!r}")
        if relative == "erpe" and erpe_mix == "input" and d_model != d_z:
            raise ValueError("erpe_mix='input' needs d_model == d_z")
        self.d_model, self.d_z, self.heads, self.length = d_model, d_z, heads, length
        self.head_dim = d_z // heads
        self.scale = 1.0 / math.sqrt(d_z)
        self.qkv = Linear(d_model, 3 * d_z, rng, bias=False, dtype=dtype)
        self.out = Linear(d_z, d_model, rng, bias=False, dtype=dtype)
        self.kind = relative
        self.erpe_mix = erpe_mix
        seed = int(rng.integers(2**31))
        self.relative: RelativeBias | ShawBias | VectorBias | None = None
        if relative == "erpe":
            self.relative = erpe_new(length, heads, dtype=dtype).cache_indices()
        elif relative == "shaw":
            self.relative = ShawBias(length, d_z, clip_k=clip_k, values=shaw_values, seed=seed, dtype=dtype)
        elif relative == "vector":
            self.relative = VectorBias(length, d_z, seed=seed, dtype=dtype)

    def named_parameters(self, prefix: str = ""):
        yield from super().named_parameters(prefix)
        rel = self.relative
        if isinstance(rel, RelativeBias):
            yield f"{prefix}relative.weights", rel.weights
        elif isinstance(rel, ShawBias):
            yield f"{prefix}relative.keys_table", rel.keys_table
            if rel.values_table is not None:
                yield f"{prefix}relative.values_table", rel.values_table
        elif isinstance(rel, VectorBias):
            yield f"{prefix}relative.embeddings", rel.embeddings

    # projection helpers ----------------------------------------------------

    @property
    def w_q(self) -> np.ndarray:
        return self.qkv.weight.data[:, : self.d_z]

    @property
    def w_k(self) -> np.ndarray:
        return self.qkv.weight.data[:, self.d_z : 2 * self.d_z]

    @property
    def w_v(self) -> np.ndarray:
        return self.qkv.weight.data[:, 2 * self.d_z :]

    def _split(self, t: Tensor) -> Tensor:
        # (B, L, h*dh) -> (B, h, L, dh)
        b, n, _ = t.shape
        return t.reshape(b, n, self.heads, -1).transpose(0, 2, 1, 3)

    def _per_head_table(self, table: Tensor) -> Tensor:
        # (R, d_z) -> (h, R, dh)
        r = table.shape[0]
        return table.reshape(r, self.heads, self.head_dim).transpose(1, 0, 2)

    def project(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        qkv = self.qkv(x)
        d = self.d_z
        return self._split(qkv[:, :, :d]), self._split(qkv[:, :, d : 2 * d]), self._split(qkv[:, :, 2 * d :])

    def attention_weights(self, x: Tensor) -> Tensor:
        """Post-softmax (B, h, L, L) matrix, before any eRPE addition."""
        squeeze = x.ndim == 2
        xb = x.reshape(1, *x.shape) if squeeze else x
        q, k, _ = self.project(xb)
        a = softmax_rows(self._scores(q, k))
        return a.reshape(a.shape[1:]) if squeeze else a

    def _scores(self, q: Tensor, k: Tensor) -> Tensor:
        rel = self.relative
        if isinstance(rel, ShawBias):
            return shaw_attention_scores(q, k, self._per_head_table(rel.keys_table), rel.index(), self.scale)
        if isinstance(rel, VectorBias):
            s_rel = vector_relative_logits(q, self._per_head_table(rel.embeddings), rel.offset_rows())
            return (q @ k.swapaxes(-1, -2) + s_rel) * self.scale
        return scaled_dot_scores(q, k, self.d_z)

    def forward(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        if x.shape[-2] != self.length and self.relative is not None:
            raise ValueError(f"sequence length {x.shape[-2]} does not match relative bias length {self.length}")
        q, k, v = self.project(x)
        a = softmax_rows(self._scores(q, k))
        rel = self.relative
        if isinstance(rel, RelativeBias):
            w = rel.materialize()  # (h, L, L)
            if self.erpe_mix == "value":
                z = (a + w) @ v
            else:
                z = a @ v + w @ self._split(x)
        elif isinstance(rel, ShawBias):
            z = shaw_values_mix(a, v, self._per_head_table(rel.values_table) if rel.values_table is not None else None,
                                rel.index())
        else:
            z = a @ v
        b, h, n, dh = z.shape
        out = self.out(z.transpose(0, 2, 1, 3).reshape(b, n, h * dh))
        return out.reshape(out.shape[1:]) if squeeze else out


def attend(x: Tensor, layer: AttentionLayer) -> Tensor:
    return layer(x)


def attend_erpe(x: Tensor, layer: AttentionLayer) -> Tensor:
    if not isinstance(layer.relative, RelativeBias):
        raise TypeError("layer has no eRPE bias attached")
    return layer(x)


def attend_shaw(x: Tensor, layer: AttentionLayer) -> Tensor:
    if not isinstance(layer.relative, ShawBias):
        raise TypeError("layer has no Shaw bias attached")
    return layer(x)


def attend_vector(x: Tensor, layer: AttentionLayer) -> Tensor:
    if not isinstance(layer.relative, VectorBias):
        raise TypeError("layer has no Vector bias attached")
    return layer(x)
