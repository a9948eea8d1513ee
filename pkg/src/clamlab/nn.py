"""Layers built on the autodiff engine: MLPs, attention, transformer blocks.

Modules are containers of parameter Tensors discovered by attribute walking,
so ``named_parameters`` yields stable dotted names for checkpoints. All
parameters are float32; init draws come from an explicit Generator passed to
every constructor, never from global state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatchError


class Module:
    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> dict:
        """Dotted-name map of every parameter, in attribute order."""
        out: dict = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(prefix=f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(prefix=f"{key}.{i}."))
        return out

    def parameters(self) -> list:
        return list(self.named_parameters().values())

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def load_state(self, arrays: dict, prefix: str = "") -> None:
        """Copy arrays into parameters by dotted name; shapes must match."""
        params = self.named_parameters(prefix=prefix)
        missing = sorted(set(params) - set(arrays))
        if missing:
            raise KeyError(f"missing parameters in state: {missing[:4]}")
        for name, p in params.items():
            arr = np.asarray(arrays[name], dtype=np.float32)
            if arr.shape != p.data.shape:
                raise ShapeMismatchError(f"load_state[{name}]", p.data.shape, arr.shape)
            p.data = arr.copy()


def _uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = Tensor(_uniform_init(rng, in_dim, (in_dim, out_dim)), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim, np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple
    output_dim: int
    slope: float = 0.2
    final_activation: Optional[str] = None  # None or "tanh"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) <= 0 for d in dims):
            raise ValueError(f"MlpSpec dims must be positive, got {dims}")
        if self.final_activation not in (None, "tanh"):
            raise ValueError(f"unknown final_activation {self.final_activation!r}")


class Mlp(Module):
    """LeakyReLU MLP; optional tanh on the output."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        dims = (spec.input_dim, *spec.hidden_dims, spec.output_dim)
        self.layers = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.spec.input_dim:
            raise ShapeMismatchError("mlp", x.shape, (self.spec.input_dim,))
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last:
                x = ad.leaky_relu(x, self.spec.slope)
        if self.spec.final_activation == "tanh":
            x = ad.tanh(x)
        return x


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim, np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, np.float32), requires_grad=True)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta, self.eps)


def causal_mask(size: int) -> np.ndarray:
    """Boolean (size, size); True marks blocked (future) positions."""
    return np.triu(np.ones((size, size), dtype=bool), k=1)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when p == 0 or no rng (inference)."""
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(np.float32) / np.float32(1.0 - p)
    return ad.mul(x, Tensor(keep))


class MultiheadAttention(Module):
    """Scaled dot-product attention over (batch, time, model_dim) inputs."""

    def __init__(self, model_dim: int, n_heads: int, rng: np.random.Generator):
        if model_dim % n_heads != 0:
            raise ValueError(f"model_dim {model_dim} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.head_dim = model_dim // n_heads
        self.wq = Linear(model_dim, model_dim, rng)
        self.wk = Linear(model_dim, model_dim, rng)
        self.wv = Linear(model_dim, model_dim, rng)
        self.wo = Linear(model_dim, model_dim, rng)

    def _split(self, x: Tensor, batch: int, t: int) -> Tensor:
        x = ad.reshape(x, (batch, t, self.n_heads, self.head_dim))
        return ad.transpose(x, (0, 2, 1, 3))

    def forward(self, q: Tensor, k: Tensor, v: Tensor,
                mask: Optional[np.ndarray] = None, return_weights: bool = False):
        if q.ndim != 3 or k.ndim != 3 or v.ndim != 3 or k.shape != v.shape:
            raise ShapeMismatchError("attention", q.shape, k.shape, v.shape)
        batch, tq, _ = q.shape
        tk = k.shape[1]
        qh = self._split(self.wq(q), batch, tq)
        kh = self._split(self.wk(k), batch, tk)
        vh = self._split(self.wv(v), batch, tk)
        scores = ad.scale(ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))),
                          1.0 / np.sqrt(self.head_dim))
        if mask is not None:
            if mask.shape != (tq, tk):
                raise ShapeMismatchError("attention_mask", mask.shape, (tq, tk))
            bias = np.where(mask, np.float32(-1e9), np.float32(0.0))
            scores = ad.add(scores, Tensor(bias))
        weights = ad.softmax(scores, axis=-1)
        out = ad.matmul(weights, vh)
        out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (batch, tq, self.n_heads * self.head_dim))
        out = self.wo(out)
        if return_weights:
            return out, weights.data
        return out


class FeedForward(Module):
    def __init__(self, model_dim: int, ff_dim: int, rng: np.random.Generator, slope: float = 0.2):
        self.lin1 = Linear(model_dim, ff_dim, rng)
        self.lin2 = Linear(ff_dim, model_dim, rng)
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        return self.lin2(ad.leaky_relu(self.lin1(x), self.slope))


class LearnedPositions(Module):
    """Learned positional table; sequences beyond max_len are rejected."""

    def __init__(self, max_len: int, model_dim: int, rng: np.random.Generator):
        self.max_len = max_len
        self.table = Tensor(
            (0.02 * rng.standard_normal((max_len, model_dim))).astype(np.float32),
            requires_grad=True)

    def forward(self, t: int) -> Tensor:
        if t > self.max_len:
            raise ValueError(f"sequence length {t} exceeds max length {self.max_len}")
        return ad.embedding_lookup(self.table, np.arange(t))


class EncoderBlock(Module):
    """Post-norm residual block: self-attention then feed-forward."""

    def __init__(self, model_dim: int, n_heads: int, ff_dim: int,
                 rng: np.random.Generator, p_drop: float = 0.0):
        self.attn = MultiheadAttention(model_dim, n_heads, rng)
        self.ff = FeedForward(model_dim, ff_dim, rng)
        self.norm1 = LayerNorm(model_dim)
        self.norm2 = LayerNorm(model_dim)
        self.p_drop = p_drop

    def forward(self, x: Tensor, mask: Optional[np.ndarray] = None,
                drop_rng: Optional[np.random.Generator] = None) -> Tensor:
        x = self.norm1(ad.add(x, dropout(self.attn(x, x, x, mask), self.p_drop, drop_rng)))
        x = self.norm2(ad.add(x, dropout(self.ff(x), self.p_drop, drop_rng)))
        return x


class DecoderBlock(Module):
    """Causal self-attention, unmasked cross-attention to memory, feed-forward."""

    def __init__(self, model_dim: int, n_heads: int, ff_dim: int,
                 rng: np.random.Generator, p_drop: float = 0.0):
        self.self_attn = MultiheadAttention(model_dim, n_heads, rng)
        self.cross_attn = MultiheadAttention(model_dim, n_heads, rng)
        self.ff = FeedForward(model_dim, ff_dim, rng)
        self.norm1 = LayerNorm(model_dim)
        self.norm2 = LayerNorm(model_dim)
        self.norm3 = LayerNorm(model_dim)
        self.p_drop = p_drop

    def forward(self, x: Tensor, memory: Tensor,
                drop_rng: Optional[np.random.Generator] = None) -> Tensor:
        mask = causal_mask(x.shape[1])
        x = self.norm1(ad.add(x, dropout(self.self_attn(x, x, x, mask), self.p_drop, drop_rng)))
        x = self.norm2(ad.add(x, dropout(self.cross_attn(x, memory, memory), self.p_drop, drop_rng)))
        x = self.norm3(ad.add(x, dropout(self.ff(x), self.p_drop, drop_rng)))
        return x


@dataclass(frozen=True)
class TransformerSpec:
    model_dim: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ff_dim: int = 256
    dropout: float = 0.0
    max_seq_len: int = 8

    def __post_init__(self):
        if self.model_dim % self.n_heads != 0:
            raise ValueError(f"model_dim {self.model_dim} not divisible by {self.n_heads} heads")
        if min(self.model_dim, self.n_heads, self.n_layers, self.ff_dim, self.max_seq_len) <= 0:
            raise ValueError("TransformerSpec dims must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


class TransformerEncoder(Module):
    def __init__(self, spec: TransformerSpec, rng: np.random.Generator):
        self.spec = spec
        self.blocks = [
            EncoderBlock(spec.model_dim, spec.n_heads, spec.ff_dim, rng, spec.dropout)
            for _ in range(spec.n_layers)
        ]

    def forward(self, x: Tensor, mask: Optional[np.ndarray] = None,
                drop_rng: Optional[np.random.Generator] = None) -> Tensor:
        for block in self.blocks:
            x = block(x, mask, drop_rng)
        return x


class TransformerDecoder(Module):
    def __init__(self, spec: TransformerSpec, rng: np.random.Generator):
        self.spec = spec
        self.blocks = [
            DecoderBlock(spec.model_dim, spec.n_heads, spec.ff_dim, rng, spec.dropout)
            for _ in range(spec.n_layers)
        ]
        self.final_norm = LayerNorm(spec.model_dim)

    def forward(self, x: Tensor, memory: Tensor,
                drop_rng: Optional[np.random.Generator] = None) -> Tensor:
        for block in self.blocks:
            x = block(x, memory, drop_rng)
        return self.final_norm(x)
