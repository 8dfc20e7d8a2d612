"""Real FFTs over power-of-two lengths.

The production transforms are backed by pocketfft (scipy.fft), which preserves
float32 inputs as complex64 spectra. Call sites are required to pad to a power
of two; non-power-of-two lengths are rejected so every transform in the package
goes through the same contract.

A self-contained iterative radix-2 implementation (`reference_fft`,
`reference_rfft`, `reference_irfft`) lives alongside as an independent route;
tests cross-check the production transforms against it.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as _sfft

__all__ = [
    "is_power_of_two",
    "next_pow2",
    "rfft",
    "irfft",
    "reference_fft",
    "reference_ifft",
    "reference_rfft",
    "reference_irfft",
]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    """Smallest power of two >= n (n >= 1)."""
    if n < 1:
        raise ValueError(f"length must be >= 1, got {n}")
    p = 1
    while p < n:
        p <<= 1
    return p


def _check_pow2(n: int, what: str) -> None:
    if not is_power_of_two(n):
        raise ValueError(f"{what} must be a power of two, got {n}")


def rfft(x: np.ndarray, n: int | None = None, axis: int = -1) -> np.ndarray:
    """Real-to-complex FFT along `axis`; transform length must be a power of two.

    If `n` is given the input is zero-padded (or truncated) to length n first.
    float32 input yields complex64 output; float64 yields complex128.
    """
    x = np.asarray(x)
    length = x.shape[axis] if n is None else n
    _check_pow2(length, "rfft length")
    return _sfft.rfft(x, n=length, axis=axis)


def irfft(spectrum: np.ndarray, n: int, axis: int = -1) -> np.ndarray:
    """Complex-to-real inverse of `rfft`; `n` must be a power of two."""
    _check_pow2(n, "irfft length")
    return _sfft.irfft(spectrum, n=n, axis=axis)


# ---------------------------------------------------------------------------
# Reference route: iterative radix-2 Cooley-Tukey over the last axis.
# ---------------------------------------------------------------------------

def _bit_reversal(n: int) -> np.ndarray:
    levels = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for i in range(levels):
        rev = (rev << 1) | ((idx >> i) & 1)
    return rev


def _radix2(x: np.ndarray, inverse: bool) -> np.ndarray:
    n = x.shape[-1]
    _check_pow2(n, "radix-2 length")
    y = np.asarray(x, dtype=np.complex128)[..., _bit_reversal(n)].copy()
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        w = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        y = y.reshape(*y.shape[:-1], n // m, m)
        even = y[..., :half]
        odd = y[..., half:] * w
        y = np.concatenate([even + odd, even - odd], axis=-1)
        y = y.reshape(*y.shape[:-2], n)
        m *= 2
    return y


def reference_fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 DFT along the last axis (complex128)."""
    return _radix2(x, inverse=False)


def reference_ifft(x: np.ndarray) -> np.ndarray:
    """Inverse of `reference_fft` (includes the 1/n factor)."""
    n = x.shape[-1]
    return _radix2(x, inverse=True) / n


def reference_rfft(x: np.ndarray) -> np.ndarray:
    """Radix-2 route for real input: full DFT, keep bins 0..n/2."""
    x = np.asarray(x, dtype=np.float64)
    full = reference_fft(x.astype(np.complex128))
    return full[..., : x.shape[-1] // 2 + 1]


def reference_irfft(spectrum: np.ndarray, n: int) -> np.ndarray:
    """Radix-2 route back to a length-n real signal."""
    _check_pow2(n, "irfft length")
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    full = np.empty(spectrum.shape[:-1] + (n,), dtype=np.complex128)
    full[..., : n // 2 + 1] = spectrum
    full[..., n // 2 + 1 :] = np.conj(spectrum[..., 1 : n // 2][..., ::-1])
    return reference_ifft(full).real
