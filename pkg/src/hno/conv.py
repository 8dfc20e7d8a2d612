"""Causal convolutions along the sequence axis.

Three routes, all differentiable:

- `direct_conv`: O(L^2) summation straight from the definition
  y[b,d,t] = sum_{n<=t} h[d,t-n] * u[b,d,n]. Independent oracle route.
- `fft_conv`: O(L log L) route — zero-pad to the next power of two >= 2L,
  multiply spectra, inverse transform, truncate to the first L samples. The
  backward pass is computed with FFT correlations (grad wrt u correlates the
  output gradient with h; grad wrt h correlates it with u).
- `short_conv`: depthwise causal filter of small odd width (left zero-pad,
  no look-ahead); the newest tap is the last kernel element.
"""

from __future__ import annotations

import numpy as np

from .fft import irfft, next_pow2, rfft
from .tensor import ShapeError, Tensor, record_operation
from .tensor import _coerce  # shared scalar/array coercion

__all__ = ["direct_conv", "fft_conv", "short_conv"]


def _check_pair(h: Tensor, u: Tensor) -> None:
    if h.ndim != 2 or u.ndim != 3:
        raise ShapeError(
            f"expected h of shape (D, L) and u of shape (B, D, L), got {h.shape} and {u.shape}")
    if h.shape[0] != u.shape[1] or h.shape[1] != u.shape[2]:
        raise ShapeError(f"kernel shape {h.shape} does not match input shape {u.shape}")


def _toeplitz(hd: np.ndarray) -> np.ndarray:
    """(D, L) kernels -> (D, L, L) lower-triangular Toeplitz matrices."""
    L = hd.shape[-1]
    t = np.arange(L)
    idx = t[:, None] - t[None, :]
    mat = hd[:, np.clip(idx, 0, None)]
    return np.where(idx[None, :, :] >= 0, mat, np.zeros((), dtype=hd.dtype))


def direct_conv(h, u) -> Tensor:
    """Causal convolution by explicit summation (the quadratic oracle)."""
    h, u = _coerce(h), _coerce(u)
    _check_pair(h, u)
    T = _toeplitz(h.data)
    out = np.einsum("dtn,bdn->bdt", T, u.data)

    def bwd(g):
        du = np.einsum("dtn,bdt->bdn", T, g)
        L = h.shape[1]
        dh = np.empty_like(h.data)
        for m in range(L):
            dh[:, m] = (g[:, :, m:] * u.data[:, :, : L - m]).sum(axis=(0, 2))
        return dh, du

    return record_operation(np.ascontiguousarray(out), (h, u), bwd)


def fft_conv(h, u) -> Tensor:
    """Causal convolution via padded real FFTs; equals direct_conv on valid input."""
    h, u = _coerce(h), _coerce(u)
    _check_pair(h, u)
    L = h.shape[1]
    P = next_pow2(2 * L)
    H = rfft(h.data, n=P)
    U = rfft(u.data, n=P)
    out = irfft(U * H[None], n=P)[..., :L]

    def bwd(g):
        G = rfft(g, n=P)
        du = irfft(G * np.conj(H)[None], n=P)[..., :L]
        dh = irfft((G * np.conj(U)).sum(axis=0), n=P)[..., :L]
        return (np.ascontiguousarray(dh.astype(h.dtype, copy=False)),
                np.ascontiguousarray(du.astype(u.dtype, copy=False)))

    return record_operation(np.ascontiguousarray(out.astype(u.dtype, copy=False)), (h, u), bwd)


def short_conv(x, kernels) -> Tensor:
    """Depthwise causal convolution with a small odd-width kernel per channel.

    y[b,c,t] = sum_j kernels[c,j] * x[b,c,t-(w-1-j)]: the last kernel element
    multiplies the current position, earlier elements reach back in time.
    """
    x, kernels = _coerce(x), _coerce(kernels)
    if x.ndim != 3 or kernels.ndim != 2:
        raise ShapeError(
            f"expected x of shape (B, C, L) and kernels of shape (C, w), got {x.shape} and {kernels.shape}")
    C, w = kernels.shape
    if w % 2 == 0:
        raise ShapeError(f"short_conv kernel width must be odd, got {w}")
    if x.shape[1] != C:
        raise ShapeError(f"channel mismatch: x has {x.shape[1]} channels, kernels have {C}")
    L = x.shape[2]
    out = np.zeros_like(x.data)
    for j in range(w):
        s = w - 1 - j
        if s >= L:
            continue
        out[..., s:] += kernels.data[:, j, None] * x.data[..., : L - s]

    def bwd(g):
        dx = np.zeros_like(x.data)
        dk = np.zeros_like(kernels.data)
        for j in range(w):
            s = w - 1 - j
            if s >= L:
                continue
            dx[..., : L - s] += kernels.data[:, j, None] * g[..., s:]
            dk[:, j] = (g[..., s:] * x.data[..., : L - s]).sum(axis=(0, 2))
        return dx, dk

    return record_operation(out, (x, kernels), bwd)
