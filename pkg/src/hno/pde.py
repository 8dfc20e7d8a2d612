"""Ground-truth PDE solvers and initial-condition samplers.

1D diffusion-reaction on the periodic unit interval, t in [0, 1]:
    du/dt = nu * u_xx + rho * u * (1 - u)
Strang splitting per step: a Crank-Nicolson diffusion half-step (periodic
tridiagonal-with-corner system, solved banded with a Sherman-Morrison corner
correction), the exact logistic reaction map over the full step, then a second
diffusion half-step. The reaction map is the closed-form logistic flow, so the
nu=0 limit is exact to round-off.

2D incompressible Navier-Stokes in vorticity form on the periodic unit square:
    dw/dt + (u . grad) w = nu * Lap(w) + f
Pseudo-spectral: velocity recovered from the streamfunction (psi_hat =
w_hat / |k|^2, u = (psi_y, -psi_x)), advection formed in physical space and
dealiased with the 2/3 rule, time stepping is Heun on advection+forcing
combined with Crank-Nicolson on the viscous term. An advective CFL bound is
checked every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

__all__ = [
    "SOLVER_VERSION",
    "DiffusionReactionConfig",
    "NavierStokesConfig",
    "GrfSpec",
    "solve_diffusion_reaction",
    "solve_navier_stokes",
    "sample_initial_condition_1d",
    "sample_grf_2d",
    "default_forcing",
    "velocity_from_vorticity",
]

SOLVER_VERSION = 1


# ---------------------------------------------------------------------------
# 1D diffusion-reaction
# ---------------------------------------------------------------------------

@dataclass
class DiffusionReactionConfig:
    nu: float
    rho: float
    nx: int
    nt: int = 512
    bc: str = "periodic"

    def __post_init__(self):
        if self.nu < 0 or self.rho < 0:
            raise ValueError(f"nu and rho must be >= 0, got nu={self.nu}, rho={self.rho}")
        if self.nx < 8:
            raise ValueError(f"nx must be >= 8, got {self.nx}")
        if self.nt < 1:
            raise ValueError(f"nt must be >= 1, got {self.nt}")
        if self.bc != "periodic":
            raise ValueError(f"only periodic boundaries are supported, got '{self.bc}'")
        if self.rho / self.nt >= 0.5:
            raise ValueError(
                f"reaction step too large: rho*dt = {self.rho / self.nt:.3g} >= 0.5")


class _PeriodicCrankNicolson:
    """Solve (I - c*Lap) x = (I + c*Lap) u on the periodic grid, c fixed.

    The corner entries of the periodic tridiagonal matrix are folded in with a
    Sherman-Morrison rank-one update around a plain banded solve.
    """

    def __init__(self, nx: int, c_over_dx2: float):
        a = -c_over_dx2                      # off-diagonal of I - c*Lap
        b = 1.0 + 2.0 * c_over_dx2           # diagonal
        self.a, self.b, self.nx = a, b, nx
        gamma = -b
        diag = np.full(nx, b)
        diag[0] = b - gamma
        diag[-1] = b - a * a / gamma
        ab = np.zeros((3, nx))
        ab[0, 1:] = a
        ab[1] = diag
        ab[2, :-1] = a
        self.ab = ab
        u_vec = np.zeros(nx)
        u_vec[0] = gamma
        u_vec[-1] = a
        self.v_vec = np.zeros(nx)
        self.v_vec[0] = 1.0
        self.v_vec[-1] = a / gamma
        self.q = solve_banded((1, 1), ab, u_vec)
        self.denom = 1.0 + self.v_vec @ self.q
        self.c = c_over_dx2

    def step(self, u: np.ndarray) -> np.ndarray:
        rhs = u + self.c * (np.roll(u, 1) + np.roll(u, -1) - 2.0 * u)
        y = solve_banded((1, 1), self.ab, rhs)
        return y - self.q * ((self.v_vec @ y) / self.denom)


def _logistic_map(u: np.ndarray, rho_dt: float) -> np.ndarray:
    """Exact flow of du/dt = rho*u*(1-u) over one step."""
    e = np.exp(rho_dt)
    return u * e / (1.0 - u + u * e)


def solve_diffusion_reaction(u0: np.ndarray, cfg: DiffusionReactionConfig) -> np.ndarray:
    """Integrate from t=0 to t=1; returns the (nt+1, nx) trajectory."""
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape != (cfg.nx,):
        raise ValueError(f"u0 must have shape ({cfg.nx},), got {u0.shape}")
    if u0.min() < -1e-9 or u0.max() > 1.0 + 1e-9:
        raise ValueError(
            f"u0 must lie in [0, 1], got range [{u0.min():.3g}, {u0.max():.3g}]")
    dt = 1.0 / cfg.nt
    dx = 1.0 / cfg.nx
    traj = np.empty((cfg.nt + 1, cfg.nx))
    traj[0] = u = u0.copy()
    half = (_PeriodicCrankNicolson(cfg.nx, cfg.nu * (dt / 2) / (2 * dx * dx))
            if cfg.nu > 0 else None)
    rho_dt = cfg.rho * dt
    for step in range(1, cfg.nt + 1):
        if half is not None:
            u = half.step(u)
        if cfg.rho > 0:
            u = _logistic_map(u, rho_dt)
        if half is not None:
            u = half.step(u)
        if not np.all(np.isfinite(u)):
            raise RuntimeError(f"diffusion-reaction solve produced NaN/Inf at step {step}")
        traj[step] = u
    return traj


def sample_initial_condition_1d(seed, nx: int, modes: int = 8) -> np.ndarray:
    """Truncated random Fourier series, amplitudes ~ 1/k, rescaled to [0.05, 0.95]."""
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    rng = np.random.default_rng(seed)
    x = np.arange(nx) / nx
    raw = np.zeros(nx)
    for k in range(1, modes + 1):
        a, b = rng.standard_normal(2) / k
        raw += a * np.cos(2 * np.pi * k * x) + b * np.sin(2 * np.pi * k * x)
    lo, hi = raw.min(), raw.max()
    if hi - lo < 1e-12:
        return np.full(nx, 0.5)
    return 0.05 + 0.9 * (raw - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# 2D Navier-Stokes (vorticity form)
# ---------------------------------------------------------------------------

@dataclass
class NavierStokesConfig:
    nu: float
    n: int
    T: float
    dt: float = 2e-3                 # target integration step; rounded per snapshot
    record_stride: float = 2.0       # snapshots per time unit
    forcing_amplitude: float = 0.1
    cfl_limit: float = 1.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid size must be a power of two >= 4, got {self.n}")
        if self.T <= 0 or self.dt <= 0 or self.record_stride <= 0:
            raise ValueError("T, dt, and record_stride must be positive")


def default_forcing(n: int, amplitude: float = 0.1) -> np.ndarray:
    """f(x, y) = amplitude * (sin(2 pi (x+y)) + cos(2 pi (x+y)))."""
    x = np.arange(n) / n
    s = x[:, None] + x[None, :]
    return amplitude * (np.sin(2 * np.pi * s) + np.cos(2 * np.pi * s))


def _wavenumbers(n: int):
    kx = 2 * np.pi * np.fft.fftfreq(n, d=1.0 / n)[:, None]
    ky = 2 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)[None, :]
    k2 = kx * kx + ky * ky
    inv_k2 = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    cutoff = n // 3
    ix = np.abs(np.fft.fftfreq(n, d=1.0 / n))[:, None]
    iy = np.fft.rfftfreq(n, d=1.0 / n)[None, :]
    dealias = (ix <= cutoff) & (iy <= cutoff)
    return kx, ky, k2, inv_k2, dealias


def velocity_from_vorticity(omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Periodic velocity field (u, v) with u = psi_y, v = -psi_x."""
    n = omega.shape[0]
    kx, ky, _, inv_k2, _ = _wavenumbers(n)
    psi_hat = np.fft.rfft2(omega) * inv_k2
    u = np.fft.irfft2(1j * ky * psi_hat, s=omega.shape)
    v = np.fft.irfft2(-1j * kx * psi_hat, s=omega.shape)
    return u, v


def solve_navier_stokes(omega0: np.ndarray, cfg: NavierStokesConfig,
                        forcing: np.ndarray | None = None
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Integrate to T; returns (times, trajectory) with one snapshot per
    1/record_stride time units (t=0 excluded)."""
    n = cfg.n
    omega0 = np.asarray(omega0, dtype=np.float64)
    if omega0.shape != (n, n):
        raise ValueError(f"omega0 must have shape ({n}, {n}), got {omega0.shape}")
    if abs(omega0.mean()) > 1e-8:
        raise ValueError(f"omega0 must have zero mean, got {omega0.mean():.3g}")
    if forcing is None:
        forcing = default_forcing(n, cfg.forcing_amplitude)
    f_hat = np.fft.rfft2(np.asarray(forcing, dtype=np.float64))

    kx, ky, k2, inv_k2, dealias = _wavenumbers(n)
    interval = 1.0 / cfg.record_stride
    n_snap = int(round(cfg.T * cfg.record_stride))
    steps_per_snap = max(1, int(np.ceil(interval / cfg.dt)))
    dt = interval / steps_per_snap
    dx = 1.0 / n

    numer = 1.0 - 0.5 * cfg.nu * dt * k2
    denom = 1.0 + 0.5 * cfg.nu * dt * k2

    def advection(omega_hat):
        """Returns (N(omega)_hat, max |velocity|)."""
        psi_hat = omega_hat * inv_k2
        stacked = np.stack([1j * ky * psi_hat, -1j * kx * psi_hat,
                            1j * kx * omega_hat, 1j * ky * omega_hat])
        u, v, wx, wy = np.fft.irfft2(stacked, s=(n, n))
        adv_hat = np.fft.rfft2(u * wx + v * wy) * dealias
        rhs = f_hat - adv_hat
        rhs[0, 0] = 0.0
        return rhs, max(np.abs(u).max(), np.abs(v).max())

    w_hat = np.fft.rfft2(omega0)
    w_hat[0, 0] = 0.0
    times = np.empty(n_snap)
    traj = np.empty((n_snap, n, n))
    step = 0
    for snap in range(n_snap):
        for _ in range(steps_per_snap):
            step += 1
            n0, umax = advection(w_hat)
            if dt * umax / dx > cfg.cfl_limit:
                raise RuntimeError(
                    f"CFL violated at step {step}: dt*|u|/dx = {dt * umax / dx:.3f}")
            w_star = (numer * w_hat + dt * n0) / denom
            n1, _ = advection(w_star)
            w_hat = (numer * w_hat + 0.5 * dt * (n0 + n1)) / denom
            w_hat[0, 0] = 0.0
            if not np.all(np.isfinite(w_hat)):
                raise RuntimeError(f"Navier-Stokes solve produced NaN/Inf at step {step}")
        traj[snap] = np.fft.irfft2(w_hat, s=(n, n))
        times[snap] = (snap + 1) * interval
    return times, traj


# ---------------------------------------------------------------------------
# Gaussian random fields
# ---------------------------------------------------------------------------

@dataclass
class GrfSpec:
    decay: float = 2.5
    tau: float = 7.0
    amplitude: float | None = None   # default sqrt(2) * tau^(decay - 1)
    mean_zero: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.decay <= 1.0:
            raise ValueError(f"decay must exceed 1 for a well-defined field, got {self.decay}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.amplitude is None:
            self.amplitude = float(np.sqrt(2.0) * self.tau ** (self.decay - 1.0))


def sample_grf_2d(spec: GrfSpec, n: int) -> np.ndarray:
    """Spectrally shaped white noise; pointwise variance is n-independent."""
    if n < 4 or (n & (n - 1)) != 0:
        raise ValueError(f"grid size must be a power of two >= 4, got {n}")
    rng = np.random.default_rng(spec.seed)
    white = rng.standard_normal((n, n))
    kx = 2 * np.pi * np.fft.fftfreq(n, d=1.0 / n)[:, None]
    ky = 2 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)[None, :]
    envelope = spec.amplitude * (kx * kx + ky * ky + spec.tau ** 2) ** (-spec.decay / 2.0)
    if spec.mean_zero:
        envelope[0, 0] = 0.0
    shaped = np.fft.rfft2(white) * envelope
    return n * np.fft.irfft2(shaped, s=(n, n))
