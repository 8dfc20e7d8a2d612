"""On-disk dataset container and sample generation.

Container layout (little-endian throughout):
  magic "HNO1" | u32 version=1 | u32 metadata byte length | UTF-8 JSON metadata |
  per-array records: u8 name length, name bytes, u8 rank, rank x u64 extents,
  float32 row-major payload.
Every dataset ships the arrays "input", "target", and "grid".

Generation is deterministic: sample i of the train split draws from seed
`seed + i`, test sample j from `seed + TEST_SEED_OFFSET + j`, so the two seed
ranges never overlap. Existing files are never overwritten unless the caller
passes force=True.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .pde import (
    SOLVER_VERSION,
    DiffusionReactionConfig,
    GrfSpec,
    NavierStokesConfig,
    sample_grf_2d,
    sample_initial_condition_1d,
    solve_diffusion_reaction,
    solve_navier_stokes,
)

__all__ = [
    "CONTAINER_MAGIC",
    "TEST_SEED_OFFSET",
    "write_container",
    "read_container",
    "generate_dataset",
    "generate_diffusion_reaction",
    "generate_navier_stokes",
    "grid_1d",
    "grid_2d",
]

CONTAINER_MAGIC = b"HNO1"
CONTAINER_VERSION = 1
TEST_SEED_OFFSET = 1_000_000
REQUIRED_ARRAYS = ("input", "target", "grid")


def write_container(path, metadata: dict, arrays: dict[str, np.ndarray],
                    force: bool = False) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"refusing to overwrite existing file: {path}")
    blob = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CONTAINER_MAGIC)
        f.write(struct.pack("<II", CONTAINER_VERSION, len(blob)))
        f.write(blob)
        for name, arr in arrays.items():
            encoded = name.encode("utf-8")
            if len(encoded) > 255:
                raise ValueError(f"array name too long: {name!r}")
            arr = np.asarray(arr)
            if arr.ndim > 255:
                raise ValueError(f"array rank too large: {arr.ndim}")
            f.write(struct.pack("<B", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CONTAINER_MAGIC:
            raise ValueError(f"not a dataset container (magic {magic!r}): {path}")
        version, meta_len = struct.unpack("<II", f.read(8))
        if version != CONTAINER_VERSION:
            raise ValueError(f"unsupported container version {version}")
        metadata = json.loads(f.read(meta_len).decode("utf-8"))
        arrays = {}
        while True:
            raw = f.read(1)
            if not raw:
                break
            (name_len,) = struct.unpack("<B", raw)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{rank}Q", f.read(8 * rank)) if rank else ()
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape).copy()
    return metadata, arrays


def grid_1d(nx: int) -> np.ndarray:
    return (np.arange(nx) / nx)[:, None].astype(np.float64)


def grid_2d(n: int) -> np.ndarray:
    x = np.arange(n) / n
    gx, gy = np.meshgrid(x, x, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _split_seeds(seed: int, samples: int, split: str) -> list[int]:
    if samples < 1:
        raise ValueError(f"sample count must be >= 1, got {samples}")
    if samples >= TEST_SEED_OFFSET:
        raise ValueError(f"sample count must be < {TEST_SEED_OFFSET}")
    base = seed if split == "train" else seed + TEST_SEED_OFFSET
    return [base + i for i in range(samples)]


def generate_diffusion_reaction(out_dir, nu: float, rho: float, nx: int,
                                samples: int, test_samples: int, seed: int,
                                nt: int = 512, modes: int = 8,
                                force: bool = False) -> dict[str, Path]:
    """1D datasets: input = initial state, target = the state at t = 1."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = DiffusionReactionConfig(nu=nu, rho=rho, nx=nx, nt=nt)
    written = {}
    for split, count in (("train", samples), ("test", test_samples)):
        seeds = _split_seeds(seed, count, split)
        inputs = np.empty((count, nx, 1), dtype=np.float32)
        targets = np.empty((count, nx, 1), dtype=np.float32)
        for i, s in enumerate(seeds):
            u0 = sample_initial_condition_1d(s, nx, modes=modes)
            traj = solve_diffusion_reaction(u0, cfg)
            inputs[i, :, 0] = u0
            targets[i, :, 0] = traj[-1]
        metadata = {
            "problem": "diffusion_reaction_1d",
            "split": split,
            "nu": nu, "rho": rho, "nx": nx, "nt": nt, "modes": modes,
            "samples": count, "seed": seed,
            "seed_range": [seeds[0], seeds[-1]],
            "bc": "periodic",
            "solver_version": SOLVER_VERSION,
        }
        path = out_dir / f"{split}.hno"
        write_container(path, metadata,
                        {"input": inputs, "target": targets, "grid": grid_1d(nx)},
                        force=force)
        written[split] = path
    return written


def generate_navier_stokes(out_dir, nu: float, n: int, samples: int,
                           test_samples: int, seed: int, T: float = 10.0,
                           snapshots: int = 20, fine_factor: int = 4,
                           dt: float = 2e-3, forcing_amplitude: float = 0.1,
                           force: bool = False) -> dict[str, Path]:
    """2D datasets: solve on the fine grid (n * fine_factor), subsample by
    striding; the first half of the snapshots is the input, the rest the target."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if snapshots < 2 or snapshots % 2 != 0:
        raise ValueError(f"snapshots must be an even count >= 2, got {snapshots}")
    if fine_factor < 1:
        raise ValueError(f"fine_factor must be >= 1, got {fine_factor}")
    fine_n = n * fine_factor
    cfg = NavierStokesConfig(nu=nu, n=fine_n, T=T, dt=dt,
                             record_stride=snapshots / T,
                             forcing_amplitude=forcing_amplitude)
    in_steps = snapshots // 2
    out_steps = snapshots - in_steps
    written = {}
    for split, count in (("train", samples), ("test", test_samples)):
        seeds = _split_seeds(seed, count, split)
        inputs = np.empty((count, n * n, in_steps), dtype=np.float32)
        targets = np.empty((count, n * n, out_steps), dtype=np.float32)
        times = None
        for i, s in enumerate(seeds):
            omega0 = sample_grf_2d(GrfSpec(seed=s), fine_n)
            times, traj = solve_navier_stokes(omega0, cfg)
            coarse = traj[:, ::fine_factor, ::fine_factor].reshape(snapshots, n * n)
            inputs[i] = coarse[:in_steps].T
            targets[i] = coarse[in_steps:].T
        metadata = {
            "problem": "navier_stokes_2d",
            "split": split,
            "nu": nu, "n": n, "fine_n": fine_n, "T": T,
            "snapshots": snapshots, "input_steps": in_steps, "target_steps": out_steps,
            "snapshot_times": [float(t) for t in times],
            "dt": dt, "forcing_amplitude": forcing_amplitude,
            "samples": count, "seed": seed,
            "seed_range": [seeds[0], seeds[-1]],
            "grf": {"decay": 2.5, "tau": 7.0},
            "solver_version": SOLVER_VERSION,
        }
        path = out_dir / f"{split}.hno"
        write_container(path, metadata,
                        {"input": inputs, "target": targets, "grid": grid_2d(n)},
                        force=force)
        written[split] = path
    return written


def generate_dataset(problem: str, out_dir, **kwargs) -> dict[str, Path]:
    if problem in ("diffusion-reaction", "diffusion_reaction_1d"):
        return generate_diffusion_reaction(out_dir, **kwargs)
    if problem in ("navier-stokes", "navier_stokes_2d"):
        return generate_navier_stokes(out_dir, **kwargs)
    raise ValueError(f"unknown problem '{problem}'")
