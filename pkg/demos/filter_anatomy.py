"""Anatomy of an implicit long-convolution filter.

A Hyena filter is not a table of L learned taps: a small network maps each
time coordinate to its tap value, and a decaying window shapes the result.
This script walks through the three ingredients, synthesizes a filter bank
at two different lengths from the same weights, and checks that applying it
through the FFT route is causal and equal to the direct summation.

Run from the repository root:  python3 demos/filter_anatomy.py
"""

import numpy as np

from hno.conv import direct_conv, fft_conv
from hno.filters import HyenaFilterGenerator, HyenaFilterSpec, positional_encoding, window
from hno.tensor import Tensor

rng = np.random.default_rng(0)

# 1. The time coordinate is fed to the filter network as one linear ramp plus
#    K cosine/sine pairs, so a 2K+1-wide row describes each position t/L.
L, K = 64, 8
gamma = positional_encoding(L, K)
print(f"positional encoding: {gamma.shape[1]} features per position "
      f"(1 ramp + {K} cos + {K} sin), rows for t=0 and t={L - 1}:")
print("  t=0   ", np.round(gamma[0, :5], 3), "...")
print("  t=L-1 ", np.round(gamma[-1, :5], 3), "...")

# 2. The window multiplies tap t by exp(-alpha * t/L) + bias: larger alpha
#    makes a filter that forgets faster, and the bias keeps a small long tail.
psi = window(L, alpha=np.array([0.5, 8.0]), bias=0.01).data
print("\nwindow envelopes (t = 0, L/2, L-1):")
print(f"  alpha=0.5 -> {psi[0, 0]:.3f}, {psi[0, L // 2]:.3f}, {psi[0, -1]:.3f}")
print(f"  alpha=8.0 -> {psi[1, 0]:.3f}, {psi[1, L // 2]:.3f}, {psi[1, -1]:.3f}")

# 3. The generator owns the network weights and one decay rate per channel;
#    `generate(L)` evaluates the network on the coordinate rows, so the SAME
#    parameters can synthesize a filter bank at any sequence length.
spec = HyenaFilterSpec(order=2, seq_len=L, channels=4, frequencies=K)
gen = HyenaFilterGenerator(spec, rng)
bank_64 = gen.generate().data
bank_8192 = gen.generate(8192).data
n_params = sum(p.size for _, p in gen.parameters())
print(f"\nfilter bank: {bank_64.shape} taps from {n_params} parameters")
print(f"same weights at L=8192: {bank_8192.shape} — a stored-tap bank would "
      f"need {2 * 4 * 8192} values there; the implicit one never grows")

# 4. Applying one filter: the FFT route must match the O(L^2) summation and
#    must be causal — changing u at position 10 cannot move outputs before 10
#    (up to float32 FFT round-off, hence the noise-floor threshold).
h = Tensor(bank_64[0])                      # (D, L) filters for order slot 0
u = Tensor(rng.standard_normal((1, 4, L)).astype(np.float32))
y_fft = fft_conv(h, u).data
y_direct = direct_conv(h, u).data
print(f"\nfft vs direct conv: max abs diff {np.abs(y_fft - y_direct).max():.2e}")

bumped = u.data.copy()
bumped[0, :, 10] += 1.0
y_bumped = fft_conv(h, Tensor(bumped)).data
moved = np.abs(y_bumped - y_fft).max(axis=(0, 1)) > 1e-4 * np.abs(y_fft).max()
print(f"causality: bump at t=10 first affects output at t={int(np.argmax(moved))}")
