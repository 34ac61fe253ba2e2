"""ConvTran: disjoint convolution embedding, absolute + relative position
encodings, one or more post-norm transformer blocks, pooled softmax head."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .attention import AttentionLayer
from .autodiff import BatchNorm, Conv1d, LayerNorm, Linear, Module, Tensor, count_parameters, no_grad
from .autodiff import functional as F
from .checkpoint import load_container, save_container
from .encodings.absolute import AbsKind, PositionTable, build_table, inject_absolute

ABS_CHOICES = ("none", "vanilla", "learned", "tape")
REL_CHOICES = ("none", "shaw", "vector", "erpe")


@dataclass
class ModelConfig:
    d_x: int
    length: int
    classes: int
    temporal_filters: int = 64
    kernel_len: int = 8
    d_model: int = 64
    d_z: int = 64
    heads: int = 8
    ffn_ratio: int = 4
    abs_encoding: str = "tape"
    rel_encoding: str = "erpe"
    dropout: float = 0.1
    seed: int = 0
    blocks: int = 1
    pooling: str = "gap_only"  # or "max_plus_gap"
    conv_activation: str = "elu"  # "elu", "gelu" or "none"
    conv_norm: bool = True
    conv_bias: bool = True
    erpe_mix: str = "value"
    shaw_values: bool = False
    shaw_clip: int | None = None
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d_x", "length", "classes", "temporal_filters", "kernel_len", "d_model", "d_z",
                     "heads", "ffn_ratio", "blocks"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_z % self.heads:
            raise ValueError(f"d_z={self.d_z} must be divisible by heads={self.heads}")
        if self.abs_encoding not in ABS_CHOICES:
            raise ValueError(f"abs_encoding must be one of {ABS_CHOICES}, got {self.abs_encoding!r}")
        if self.rel_encoding not in REL_CHOICES:
            raise ValueError(f"rel_encoding must be one of {REL_CHOICES}, got {self.rel_encoding!r}")
        if self.abs_encoding in ("vanilla", "tape") and self.d_model % 2:
            raise ValueError("sinusoidal encodings need an even d_model")
        if self.pooling not in ("gap_only", "max_plus_gap"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.conv_activation not in ("elu", "gelu", "none"):
            raise ValueError(f"unknown conv_activation {self.conv_activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def _activation(name: str, x: Tensor) -> Tensor:
    if name == "elu":
        return F.elu(x)
    if name == "gelu":
        return F.gelu(x)
    return x


class ConvEmbedding(Module):
    """Temporal (1 x k) filters per channel, then d_model spatial (d_x x M) filters.

    Input (B, d_x, L) -> (B, d_x, M, L) -> (B, L, d_model).
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype):
        m = cfg.temporal_filters
        self.d_x, self.m = cfg.d_x, m
        self.activation = cfg.conv_activation
        self.temporal_conv = Conv1d(1, m, cfg.kernel_len, rng, bias=cfg.conv_bias, dtype=dtype)
        self.temporal_norm = BatchNorm(m, axis=2, dtype=dtype) if cfg.conv_norm else None
        self.spatial_conv = Linear(cfg.d_x * m, cfg.d_model, rng, bias=cfg.conv_bias, dtype=dtype)
        self.spatial_norm = BatchNorm(cfg.d_model, axis=-1, dtype=dtype) if cfg.conv_norm else None

    def forward(self, x: Tensor) -> Tensor:
        b, d_x, length = x.shape
        if d_x != self.d_x:
            raise ValueError(f"expected {self.d_x} input channels, got {d_x}")
        t = self.temporal_conv(x.reshape(b * d_x, 1, length)).reshape(b, d_x, self.m, length)
        if self.temporal_norm is not None:
            t = self.temporal_norm(t)
        t = _activation(self.activation, t)
        s = self.spatial_conv(t.transpose(0, 3, 1, 2).reshape(b, length, d_x * self.m))
        if self.spatial_norm is not None:
            s = self.spatial_norm(s)
        return _activation(self.activation, s)


class TransformerBlock(Module):
    """Post-norm block: LN(x + attn(x)), then LN(x + FFN(x)) with a GELU FFN."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype):
        self.attention = AttentionLayer(
            cfg.d_model, cfg.d_z, cfg.heads, cfg.length, rng,
            relative=cfg.rel_encoding, erpe_mix=cfg.erpe_mix,
            shaw_values=cfg.shaw_values, clip_k=cfg.shaw_clip, dtype=dtype,
        )
        self.norm1 = LayerNorm(cfg.d_model, dtype=dtype)
        self.ffn_in = Linear(cfg.d_model, cfg.ffn_ratio * cfg.d_model, rng, dtype=dtype)
        self.ffn_out = Linear(cfg.ffn_ratio * cfg.d_model, cfg.d_model, rng, dtype=dtype)
        self.norm2 = LayerNorm(cfg.d_model, dtype=dtype)
        self.dropout = cfg.dropout
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        a = F.dropout(self.attention(x), self.dropout, self.training, self.rng)
        x = self.norm1(x + a)
        f = self.ffn_out(F.gelu(self.ffn_in(x)))
        f = F.dropout(f, self.dropout, self.training, self.rng)
        return self.norm2(x + f)


class ConvTranNet(Module):
    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.config = cfg
        dtype = np.dtype(cfg.dtype)
        self.dtype = dtype
        rng = np.random.default_rng(cfg.seed)
        self.embedding = ConvEmbedding(cfg, rng, dtype)
        self.position_table: PositionTable | None = None
        if cfg.abs_encoding != "none":
            self.position_table = build_table(AbsKind(cfg.abs_encoding), cfg.length, cfg.d_model,
                                              seed=int(rng.integers(2**31)))
            if self.position_table.trainable:
                self.position_table.values.data = self.position_table.values.data.astype(dtype)
        self.blocks = [TransformerBlock(cfg, rng, dtype) for _ in range(cfg.blocks)]
        self.classifier = Linear(cfg.d_model, cfg.classes, rng, dtype=dtype)
        self.dropout_rng = rng

    def named_parameters(self, prefix: str = ""):
        yield from super().named_parameters(prefix)
        if self.position_table is not None and self.position_table.trainable:
            yield f"{prefix}position_table.values", self.position_table.values

    def embed(self, x: Tensor) -> Tensor:
        return self.embedding(x)

    def encode(self, x: Tensor) -> Tensor:
        """Embedding + absolute positions + transformer blocks: (B, L, d_model)."""
        h = self.embed(x)
        if self.position_table is not None:
            h = inject_absolute(h, self.position_table)
        for block in self.blocks:
            h = block(h)
        return h

    def head(self, h: Tensor) -> Tensor:
        h = F.elu(h)
        pooled = h.mean(axis=1)
        if self.config.pooling == "max_plus_gap":
            pooled = pooled + h.max(axis=1)
        return self.classifier(pooled)

    def forward(self, x) -> Tensor:
        """Logits (B, classes) for input (B, d_x, L); a single (d_x, L) sample gives (classes,)."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        elif x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype))
        single = x.ndim == 2
        if single:
            x = x.reshape(1, *x.shape)
        cfg = self.config
        if x.shape[1:] != (cfg.d_x, cfg.length):
            raise ValueError(f"expected input (*, {cfg.d_x}, {cfg.length}), got {x.shape}")
        try:
            logits = self.head(self.encode(x))
        except FloatingPointError as exc:
            raise FloatingPointError(f"{self._nan_report(x)} ({exc})") from exc
        if not np.isfinite(logits.data).all():
            raise FloatingPointError(self._nan_report(x))
        return logits.reshape(cfg.classes) if single else logits

    def _nan_report(self, x: Tensor) -> str:
        bad = [name for name, p in self.named_parameters() if not np.isfinite(p.data).all()]
        parts = ["non-finite logits"]
        if not np.isfinite(x.data).all():
            parts.append("input contains NaN/inf")
        if bad:
            parts.append(f"non-finite parameters: {bad}")
        return "; ".join(parts)

    def predict_proba(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        was_training = self.training
        self.eval()
        out = []
        with no_grad():
            for i in range(0, len(x), batch_size):
                logits = self.forward(x[i : i + batch_size]).data
                e = np.exp(logits - logits.max(axis=1, keepdims=True))
                out.append(e / e.sum(axis=1, keepdims=True))
        self.train(was_training)
        return np.concatenate(out, axis=0)

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        return self.predict_proba(x, batch_size).argmax(axis=1)


def forward(x, net: ConvTranNet) -> Tensor:
    return net(x)


def save_checkpoint(path, net: ConvTranNet, extra: dict | None = None) -> None:
    meta = {"config": net.config.to_dict()}
    if extra:
        meta["extra"] = extra
    save_container(path, "model", meta, net.state_dict())


def load_checkpoint(path) -> ConvTranNet:
    meta, arrays = load_container(path, kind="model")
    net = ConvTranNet(ModelConfig.from_dict(meta["config"]))
    net.load_state_dict(arrays)
    return net


__all__ = [
    "ConvEmbedding",
    "ConvTranNet",
    "ModelConfig",
    "TransformerBlock",
    "count_parameters",
    "forward",
    "load_checkpoint",
    "save_checkpoint",
]
