"""The two data-generating solvers and the analytic structure they honor.

The 1D diffusion-reaction solver splits each step into an exact logistic
flow and a Crank-Nicolson diffusion half-step; the 2D Navier-Stokes solver
advances vorticity pseudo-spectrally. Both have special cases with closed
forms, which is what makes them trustworthy data generators: this script
runs those cases and prints the measured error next to the exact answer.

Run from the repository root:  python3 demos/solver_showcase.py
"""

import tempfile
from pathlib import Path

import numpy as np

from hno.pde import (
    DiffusionReactionConfig,
    GrfSpec,
    NavierStokesConfig,
    sample_grf_2d,
    sample_initial_condition_1d,
    solve_diffusion_reaction,
    solve_navier_stokes,
    velocity_from_vorticity,
)
from hno.viz import save_field_ppm

# --- 1D: without diffusion every grid point follows the logistic ODE -------
u0 = sample_initial_condition_1d(seed=7, nx=128)
traj = solve_diffusion_reaction(u0, DiffusionReactionConfig(nu=0.0, rho=1.0, nx=128))
exact = u0 * np.e / (1.0 - u0 + u0 * np.e)
print("1D reaction-only vs logistic closed form:"
      f" max rel err {np.abs(traj[-1] - exact).max() / exact.max():.2e}")

# --- 1D: without reaction a single sine mode just decays --------------------
nu, nx = 0.04, 256
x = np.arange(nx) / nx
mode = 0.5 + 0.4 * np.sin(2 * np.pi * x)
traj = solve_diffusion_reaction(mode, DiffusionReactionConfig(nu=nu, rho=0.0, nx=nx))
decay = np.exp(-nu * 4 * np.pi ** 2)
print(f"1D diffusion-only mode decay: measured {2 * np.abs(np.fft.rfft(traj[-1])[1]) / nx:.6f}"
      f" vs exact {0.4 * decay:.6f}")

# --- 1D: the full problem respects the maximum principle --------------------
u0 = sample_initial_condition_1d(seed=3, nx=256)
traj = solve_diffusion_reaction(u0, DiffusionReactionConfig(nu=0.5, rho=1.0, nx=256))
print(f"1D full solve stays in the unit interval: min {traj.min():.4f}, max {traj.max():.4f}")

# --- 2D: a vorticity field whose advection vanishes decays viscously --------
n, nu2 = 64, 1e-2
g = np.arange(n) / n
X, Y = np.meshgrid(g, g, indexing="ij")
w0 = 4 * np.pi * np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y)
cfg = NavierStokesConfig(nu=nu2, n=n, T=0.5, dt=2e-3, record_stride=2.0)
_, traj2 = solve_navier_stokes(w0, cfg, forcing=np.zeros((n, n)))
exact2 = w0 * np.exp(-8 * np.pi ** 2 * nu2 * 0.5)
rel = np.linalg.norm(traj2[-1] - exact2) / np.linalg.norm(exact2)
print(f"2D Taylor-Green viscous decay: rel err {rel:.2e}")

# --- 2D: a turbulent-looking run from a random smooth field ------------------
w0 = sample_grf_2d(GrfSpec(seed=5), n)
u, v = velocity_from_vorticity(w0)
print(f"2D random initial field: mean {w0.mean():.2e}, "
      f"max speed {np.hypot(u, v).max():.3f}")
times, traj3 = solve_navier_stokes(w0, NavierStokesConfig(nu=1e-3, n=n, T=2.0,
                                                          record_stride=2.0))
out = Path(tempfile.mkdtemp(prefix="hno_demo_"))
save_field_ppm(out / "vorticity_t0.ppm", w0, scale=4)
save_field_ppm(out / "vorticity_t2.ppm", traj3[-1], scale=4)
print(f"2D forced run recorded {len(times)} snapshots; wrote "
      f"{out}/vorticity_t0.ppm and vorticity_t2.ppm (diverging colormap)")
