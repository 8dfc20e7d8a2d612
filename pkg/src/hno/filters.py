"""Implicit long-filter parameterization.

A long convolution kernel of length L is not stored as L weights; it is the
output of a small network evaluated at the positions: a sinusoidal positional
encoding of t, a feed-forward net with sine activations, and a multiplicative
exponentially-decaying window. The parameter count is therefore independent of
L, and the same parameters can synthesize filters for any sequence length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = ["HyenaFilterSpec", "positional_encoding", "window", "HyenaFilterGenerator"]

DEFAULT_FILTER_HIDDEN = [64, 64]


@dataclass
class HyenaFilterSpec:
    """Hyperparameters of one bank of implicit filters (N filters x D channels)."""

    order: int
    seq_len: int
    channels: int
    frequencies: int = 8
    ffn_widths: list[int] = field(default_factory=list)
    alpha_min: float = 0.3
    alpha_max: float = 8.0
    window_bias: float = 0.01
    omega: float = 10.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if self.frequencies < 1:
            raise ValueError(f"frequencies must be >= 1, got {self.frequencies}")
        if not self.ffn_widths:
            self.ffn_widths = [2 * self.frequencies + 1, *DEFAULT_FILTER_HIDDEN,
                               self.order * self.channels]
        if self.ffn_widths[0] != 2 * self.frequencies + 1:
            raise ValueError(
                f"filter FFN input width must be 2K+1 = {2 * self.frequencies + 1}, "
                f"got {self.ffn_widths[0]}")
        if self.ffn_widths[-1] != self.order * self.channels:
            raise ValueError(
                f"filter FFN output width must be N*D = {self.order * self.channels}, "
                f"got {self.ffn_widths[-1]}")
        if not (0 < self.alpha_min <= self.alpha_max):
            raise ValueError(
                f"decay range must satisfy 0 < alpha_min <= alpha_max, "
                f"got [{self.alpha_min}, {self.alpha_max}]")
        if self.window_bias < 0:
            raise ValueError(f"window bias must be >= 0, got {self.window_bias}")


def positional_encoding(L: int, K: int, dtype=np.float32) -> np.ndarray:
    """(L, 2K+1) rows [t/L, cos(2*pi*k*t/L)_k=1..K, sin(2*pi*k*t/L)_k=1..K]."""
    if L < 1 or K < 1:
        raise ValueError(f"positional_encoding requires L >= 1 and K >= 1, got L={L}, K={K}")
    t = np.arange(L, dtype=np.float64) / L
    k = np.arange(1, K + 1, dtype=np.float64)
    phase = 2.0 * np.pi * t[:, None] * k[None, :]
    out = np.concatenate([t[:, None], np.cos(phase), np.sin(phase)], axis=1)
    return out.astype(dtype)


def window(L: int, alpha, bias: float) -> Tensor:
    """Decay envelope psi[c, t] = exp(-alpha[c] * t/L) + bias, for t = 0..L-1.

    Differentiable with respect to `alpha` when it is a grad-tracked Tensor.
    """
    alpha_t = alpha if isinstance(alpha, Tensor) else Tensor(np.asarray(alpha))
    if np.any(alpha_t.data <= 0):
        raise ValueError("window decay rates must all be positive")
    if bias < 0:
        raise ValueError(f"window bias must be >= 0, got {bias}")
    tgrid = Tensor((-np.arange(L, dtype=np.float64) / L).astype(alpha_t.dtype))
    col = T.reshape(alpha_t, (-1, 1))
    return T.add(T.exp(T.mul(col, tgrid)), np.asarray(bias, dtype=alpha_t.dtype))


class HyenaFilterGenerator:
    """Owns the filter FFN weights and decay rates; emits (N, D, L) filters.

    The decay rates are stored as log(alpha) so they stay positive under
    gradient updates; they initialize log-spaced across channels in
    [alpha_min, alpha_max]. Hidden FFN activations are sin(omega * x).
    """

    def __init__(self, spec: HyenaFilterSpec, rng: np.random.Generator,
                 dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        widths = spec.ffn_widths
        for d_in, d_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(d_in)
            w = rng.uniform(-bound, bound, size=(d_in, d_out)).astype(self.dtype)
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(d_out, dtype=self.dtype), requires_grad=True))
        n_chan = spec.order * spec.channels
        alpha0 = np.geomspace(spec.alpha_min, spec.alpha_max, n_chan)
        self.log_alpha = Tensor(np.log(alpha0).astype(self.dtype), requires_grad=True)

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"ffn{i}.w", w))
            out.append((f"ffn{i}.b", b))
        out.append(("log_alpha", self.log_alpha))
        return out

    def generate(self, L: int | None = None) -> Tensor:
        """Synthesize the filter bank at length L (default: spec.seq_len)."""
        spec = self.spec
        L = spec.seq_len if L is None else L
        gamma = Tensor(positional_encoding(L, spec.frequencies, dtype=self.dtype))
        z = gamma
        last = len(self.weights) - 1
        omega = np.asarray(spec.omega, dtype=self.dtype)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = T.add(T.matmul(z, w), b)
            if i != last:
                z = T.sin(T.mul(z, omega))
        envelope = window(L, T.exp(self.log_alpha), spec.window_bias)
        h = T.mul(T.transpose(z, (1, 0)), envelope)
        return T.reshape(h, (spec.order, spec.channels, L))
