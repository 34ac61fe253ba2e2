"""Differentiable primitives used by the model.

Each function computes its forward value with numpy and registers a closure
that maps the upstream gradient back onto its inputs.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .tensor import Tensor, _as_tensor, _unbroadcast


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max subtraction."""
    z = x.data
    if np.isnan(z).any():
        raise FloatingPointError("softmax received NaN input")
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), back)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data
    shifted = z - z.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(out, (x,), back)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under softmax(logits).

    ``logits`` has shape (n, c); ``targets`` is an int array of length n.
    """
    targets = np.asarray(targets, dtype=np.int64)
    z = logits.data
    if z.ndim != 2 or z.shape[0] != targets.shape[0]:
        raise ValueError(f"cross_entropy expects (n, c) logits and n targets, got {z.shape}, {targets.shape}")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), targets].mean()

    def back(g):
        grad = np.exp(logp)
        grad[np.arange(n), targets] -= 1.0
        return (grad * (g / n),)

    return Tensor._make(np.asarray(loss, dtype=z.dtype), (logits,), back)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf based) Gaussian error linear unit."""
    z = x.data
    cdf = 0.5 * (1.0 + erf(z / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return Tensor._make(z * cdf, (x,), lambda g: (g * (cdf + z * pdf),))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    z = x.data
    neg = z <= 0
    em1 = np.expm1(np.where(neg, z, 0.0))
    out = np.where(neg, alpha * em1, z)
    slope = np.where(neg, alpha * (em1 + 1.0), 1.0)
    return Tensor._make(out, (x,), lambda g: (g * slope,))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    z = x.data
    mu = z.mean(axis=-1, keepdims=True)
    xc = z - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def back(g):
        gx_hat = g * gamma.data
        n = z.shape[-1]
        gx = inv / n * (n * gx_hat - gx_hat.sum(-1, keepdims=True) - xhat * (gx_hat * xhat).sum(-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gamma.shape), _unbroadcast(g, beta.shape)

    return Tensor._make(out, (x, gamma, beta), back)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    axis: int,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization with statistics over every axis except ``axis``.

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, as is conventional).  In eval mode
    the running buffers are used and the op is affine in ``x``.
    """
    z = x.data
    axis = axis % z.ndim
    red = tuple(i for i in range(z.ndim) if i != axis)
    bshape = [1] * z.ndim
    bshape[axis] = z.shape[axis]
    g_ = gamma.data.reshape(bshape)
    b_ = beta.data.reshape(bshape)

    if training:
        m = z.size // z.shape[axis]
        mu = z.mean(axis=red, keepdims=True)
        xc = z - mu
        var = (xc * xc).mean(axis=red, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        if m > 1:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu.reshape(-1)
            running_var *= 1.0 - momentum
            running_var += momentum * var.reshape(-1) * m / (m - 1)

        def back(g):
            gx_hat = g * g_
            gx = inv / m * (m * gx_hat - gx_hat.sum(red, keepdims=True) - xhat * (gx_hat * xhat).sum(red, keepdims=True))
            return gx, (g * xhat).sum(red), g.sum(red)
    else:
        inv = 1.0 / np.sqrt(running_var.reshape(bshape) + eps)
        xhat = (z - running_mean.reshape(bshape)) * inv

        def back(g):
            return g * g_ * inv, (g * xhat).sum(red), g.sum(red)

    out = xhat * g_ + b_
    return Tensor._make(out.astype(z.dtype, copy=False), (x, gamma, beta), back)


def same_padding(kernel_len: int) -> tuple[int, int]:
    """Left/right zero padding that keeps the output length equal to the input."""
    total = kernel_len - 1
    return total // 2, total - total // 2


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, padding: str = "same") -> Tensor:
    """1-D cross-correlation.

    ``x`` is (batch, c_in, length); ``weight`` is (c_out, c_in, k).  With
    ``padding="same"`` the output length equals the input length (extra pad
    goes on the right for even ``k``); ``"valid"`` pads nothing.
    """
    xd, w = x.data, weight.data
    if xd.ndim != 3 or w.ndim != 3 or xd.shape[1] != w.shape[1]:
        raise ValueError(f"conv1d shape mismatch: input {xd.shape}, weight {w.shape}")
    n, c_in, length = xd.shape
    c_out, _, k = w.shape
    left, right = same_padding(k) if padding == "same" else (0, 0)
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right))) if left or right else xd
    out_len = xp.shape[-1] - k + 1
    if out_len < 1:
        raise ValueError(f"kernel of length {k} longer than padded input {xp.shape[-1]}")
    # cols: (n, out_len, c_in, k)
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2).transpose(0, 2, 1, 3)
    wmat = w.reshape(c_out, c_in * k)
    out = cols.reshape(n, out_len, c_in * k) @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.transpose(0, 2, 1)

    def back(g):
        gt = g.transpose(0, 2, 1)  # (n, out_len, c_out)
        gw = np.tensordot(gt, cols.reshape(n, out_len, c_in * k), axes=([0, 1], [0, 1])).reshape(w.shape)
        gcols = (gt @ wmat).reshape(n, out_len, c_in, k)
        gxp = np.zeros(xp.shape, dtype=xp.dtype)
        for t in range(k):
            gxp[:, :, t : t + out_len] += gcols[:, :, :, t].transpose(0, 2, 1)
        gx = gxp[:, :, left : left + length]
        gb = gt.sum(axis=(0, 1)) if bias is not None else None
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(np.ascontiguousarray(out), parents, back)


def take(table: Tensor, index, axis: int = 0) -> Tensor:
    """Gather entries of ``table`` along ``axis`` with an integer ``index`` array.

    The backward pass scatter-adds the upstream gradient into the source
    positions, so repeated indices accumulate.
    """
    index = np.asarray(index, dtype=np.intp)
    src = table.data
    axis = axis % src.ndim
    out = np.take(src, index, axis=axis)

    def back(g):
        full = np.zeros(src.shape, dtype=src.dtype)
        # move the gathered axis block to the front so add.at sees a leading index
        gm = np.moveaxis(g, tuple(range(axis, axis + index.ndim)), tuple(range(index.ndim)))
        fm = np.moveaxis(full, axis, 0)
        np.add.at(fm, index, gm)
        return (full,)

    return Tensor._make(out, (table,), back)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return Tensor._make(x.data * keep, (x,), lambda g: (g * keep,))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), back)


def skew(qp: Tensor) -> Tensor:
    """Realign a (..., L, 2L-1) relative-logit block into (..., L, L).

    Column ``c`` of the input holds relative offset ``j - i = c - (L - 1)``;
    output entry (i, j) is input entry (i, j - i + L - 1).  The realignment is
    a flatten / offset / reshape / slice on the last two axes, so no
    (L, L, d) intermediate is ever built.
    """
    z = qp.data
    length, width = z.shape[-2:]
    if width != 2 * length - 1:
        raise ValueError(f"skew expects (..., L, 2L-1), got {z.shape}")
    lead = z.shape[:-2]
    if length == 1:
        return Tensor._make(z.copy(), (qp,), lambda g: (g.copy(),))
    stride = 2 * length - 2
    flat = z.reshape(*lead, length * width)
    out = flat[..., length - 1 : length - 1 + length * stride].reshape(*lead, length, stride)[..., :length]

    def back(g):
        buf = np.zeros((*lead, length, stride), dtype=g.dtype)
        buf[..., :length] = g
        gflat = np.zeros((*lead, length * width), dtype=g.dtype)
        gflat[..., length - 1 : length - 1 + length * stride] = buf.reshape(*lead, length * stride)
        return (gflat.reshape(z.shape),)

    return Tensor._make(np.ascontiguousarray(out), (qp,), back)
