"""Neural-net building blocks: dense layers, the Hyena operator and its block
wrapper, multi-head cross-attention, and random Fourier features.

The Hyena operator maps (B, L, D) -> (B, L, D): a dense projection to N+1
streams, a short depthwise causal filter on each, then N rounds of
gate-multiplied long convolution with implicitly parameterized filters
(z <- gate_n * conv(h_n, z), starting from z = v), and a dense output
projection. The block wrapper adds the residual/norm protocol: the normalized
operator output is added back to the input, and a position-wise feed-forward
produces the block output.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .conv import fft_conv, short_conv
from .filters import HyenaFilterGenerator, HyenaFilterSpec
from .tensor import ShapeError, Tensor

__all__ = [
    "Dense",
    "FeedForward",
    "LayerNorm",
    "CrossAttention",
    "RandomFourierFeatures",
    "HyenaOperator",
    "HyenaBlock",
]


class Dense:
    """Affine map on the last axis; weights uniform in +-1/sqrt(fan_in), zero bias."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32):
        bound = 1.0 / np.sqrt(d_in)
        self.w = Tensor(rng.uniform(-bound, bound, size=(d_in, d_out)).astype(dtype),
                        requires_grad=True)
        self.b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return T.add(T.matmul(x, self.w), self.b)

    def parameters(self):
        return [("w", self.w), ("b", self.b)]


class FeedForward:
    """Dense -> GELU -> dropout -> ... -> Dense over a width list."""

    def __init__(self, widths: list[int], rng: np.random.Generator,
                 dropout_rate: float = 0.0, dtype=np.float32):
        if len(widths) < 2:
            raise ValueError(f"feed-forward needs at least two widths, got {widths}")
        self.layers = [Dense(a, b, rng, dtype) for a, b in zip(widths[:-1], widths[1:])]
        self.dropout_rate = dropout_rate

    def __call__(self, x, training: bool = False, rng=None) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i != last:
                x = T.gelu(x)
                x = T.dropout(x, self.dropout_rate, rng=rng, training=training)
        return x

    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"dense{i}.{n}", p) for n, p in layer.parameters())
        return out


class LayerNorm:
    def __init__(self, d: int, dtype=np.float32, eps: float = 1e-5):
        self.gain = Tensor(np.ones(d, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(d, dtype=dtype), requires_grad=True)
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, eps=self.eps)

    def parameters(self):
        return [("gain", self.gain), ("bias", self.bias)]


class CrossAttention:
    """Multi-head scaled dot-product attention; queries and keys/values differ."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, dtype=np.float32):
        if d % heads != 0:
            raise ShapeError(f"head count {heads} must divide width {d}")
        self.d = d
        self.heads = heads
        self.wq = Dense(d, d, rng, dtype)
        self.wk = Dense(d, d, rng, dtype)
        self.wv = Dense(d, d, rng, dtype)
        self.wo = Dense(d, d, rng, dtype)

    def _split(self, x: Tensor) -> Tensor:
        b, l, _ = x.shape
        return T.transpose(T.reshape(x, (b, l, self.heads, self.d // self.heads)),
                           (0, 2, 1, 3))

    def __call__(self, queries, keys_values, return_weights: bool = False):
        q = self._split(self.wq(queries))
        k = self._split(self.wk(keys_values))
        v = self._split(self.wv(keys_values))
        scale = np.asarray(1.0 / np.sqrt(q.shape[-1]), dtype=q.dtype)
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), scale)
        weights = T.softmax(scores, axis=-1)
        ctx = T.matmul(weights, v)
        b, _, lq, _ = ctx.shape
        merged = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, lq, self.d))
        out = self.wo(merged)
        return (out, weights) if return_weights else out

    def parameters(self):
        out = []
        for name, mod in [("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo)]:
            out.extend((f"{name}.{n}", p) for n, p in mod.parameters())
        return out


class RandomFourierFeatures:
    """Frozen projection: coords (L, c) -> [cos(2 pi X B), sin(2 pi X B)] (L, 2m)."""

    def __init__(self, in_dim: int, map_size: int, sigma: float,
                 rng: np.random.Generator, dtype=np.float32):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.matrix = (sigma * rng.standard_normal((in_dim, map_size))).astype(dtype)

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        phase = 2.0 * np.pi * np.asarray(coords, dtype=self.matrix.dtype) @ self.matrix
        return np.concatenate([np.cos(phase), np.sin(phase)], axis=-1).astype(self.matrix.dtype)


class HyenaOperator:
    """Projections + short filters + gated long-convolution recurrence."""

    def __init__(self, d: int, order: int, seq_len: int, rng: np.random.Generator,
                 frequencies: int = 8, filter_hidden: list[int] | None = None,
                 short_width: int = 3, dtype=np.float32):
        self.d = d
        self.order = order
        n_stream = (order + 1) * d
        self.in_proj = Dense(d, n_stream, rng, dtype)
        bound = 1.0 / np.sqrt(short_width)
        self.short_kernels = Tensor(
            rng.uniform(-bound, bound, size=(n_stream, short_width)).astype(dtype),
            requires_grad=True)
        hidden = filter_hidden if filter_hidden is not None else list(DEFAULT_HIDDEN)
        spec = HyenaFilterSpec(
            order=order, seq_len=seq_len, channels=d, frequencies=frequencies,
            ffn_widths=[2 * frequencies + 1, *hidden, order * d])
        self.filter_gen = HyenaFilterGenerator(spec, rng, dtype=dtype)
        self.out_proj = Dense(d, d, rng, dtype)

    def project_inputs(self, x) -> list[Tensor]:
        """(B, L, D) -> N+1 channel-major streams (B, D, L): v, then the gates."""
        if x.shape[-1] != self.d:
            raise ShapeError(f"expected {self.d} input channels, got {x.shape[-1]}")
        z = T.transpose(self.in_proj(x), (0, 2, 1))
        z = short_conv(z, self.short_kernels)
        d = self.d
        return [z[:, i * d:(i + 1) * d, :] for i in range(self.order + 1)]

    @staticmethod
    def recurrence(v: Tensor, gates: list[Tensor], filters: Tensor) -> Tensor:
        """z <- gate_n * conv(h_n, z) for n = 1..N, starting from z = v."""
        if len(gates) != filters.shape[0]:
            raise ShapeError(
                f"got {len(gates)} gates but {filters.shape[0]} filters")
        z = v
        for n, gate in enumerate(gates):
            z = T.mul(gate, fft_conv(filters[n], z))
        return z

    def __call__(self, x) -> Tensor:
        streams = self.project_inputs(x)
        filters = self.filter_gen.generate(L=x.shape[1])
        z = self.recurrence(streams[0], streams[1:], filters)
        return self.out_proj(T.transpose(z, (0, 2, 1)))

    def parameters(self):
        out = [(f"in_proj.{n}", p) for n, p in self.in_proj.parameters()]
        out.append(("short_kernels", self.short_kernels))
        out.extend((f"filter.{n}", p) for n, p in self.filter_gen.parameters())
        out.extend((f"out_proj.{n}", p) for n, p in self.out_proj.parameters())
        return out


DEFAULT_HIDDEN = (64, 64)


class HyenaBlock:
    """u' = u + dropout(Norm(HyenaOperator(u))); output = FeedForward(u').

    The feed-forward stage has no residual of its own; position-wise layers
    keep the whole block causal along the sequence axis.
    """

    def __init__(self, d: int, order: int, seq_len: int, ffn_widths: list[int],
                 rng: np.random.Generator, frequencies: int = 8,
                 filter_hidden: list[int] | None = None, dropout_rate: float = 0.03,
                 short_width: int = 3, dtype=np.float32):
        if ffn_widths[0] != d or ffn_widths[-1] != d:
            raise ValueError(f"block FFN widths must start and end at {d}, got {ffn_widths}")
        self.operator = HyenaOperator(d, order, seq_len, rng, frequencies=frequencies,
                                      filter_hidden=filter_hidden,
                                      short_width=short_width, dtype=dtype)
        self.norm = LayerNorm(d, dtype=dtype)
        self.ffn = FeedForward(ffn_widths, rng, dropout_rate=dropout_rate, dtype=dtype)
        self.dropout_rate = dropout_rate

    def __call__(self, u, training: bool = False, rng=None) -> Tensor:
        mixed = T.dropout(self.norm(self.operator(u)), self.dropout_rate,
                          rng=rng, training=training)
        return self.ffn(T.add(u, mixed), training=training, rng=rng)

    def parameters(self):
        out = [(f"op.{n}", p) for n, p in self.operator.parameters()]
        out.extend((f"norm.{n}", p) for n, p in self.norm.parameters())
        out.extend((f"ffn.{n}", p) for n, p in self.ffn.parameters())
        return out
