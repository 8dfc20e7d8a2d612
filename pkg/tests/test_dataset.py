"""Dataset container codec and deterministic sample generation."""

import struct

import numpy as np
import pytest

from hno.dataset import (
    CONTAINER_MAGIC,
    TEST_SEED_OFFSET,
    generate_dataset,
    generate_diffusion_reaction,
    generate_navier_stokes,
    grid_1d,
    grid_2d,
    read_container,
    write_container,
)
from hno.pde import (
    DiffusionReactionConfig,
    GrfSpec,
    NavierStokesConfig,
    sample_grf_2d,
    sample_initial_condition_1d,
    solve_diffusion_reaction,
    solve_navier_stokes,
)


# ---------------------------------------------------------------------------
# Container codec
# ---------------------------------------------------------------------------

def test_container_round_trip(tmp_path):
    path = tmp_path / "d.hno"
    metadata = {"problem": "demo", "nu": 0.5, "samples": 3, "nested": {"a": [1, 2]}}
    arrays = {
        "input": np.arange(24, dtype=np.float32).reshape(2, 3, 4),
        "target": np.linspace(0, 1, 6, dtype=np.float64).reshape(3, 2),
        "grid": np.array([0.0, 0.25, 0.5, 0.75]),
        "scalar": np.float32(3.5),
    }
    write_container(path, metadata, arrays)
    meta2, arrays2 = read_container(path)
    assert meta2 == metadata
    assert list(arrays2) == ["input", "target", "grid", "scalar"]
    for name, arr in arrays.items():
        got = arrays2[name]
        assert got.dtype == np.float32
        assert got.shape == np.asarray(arr).shape
        assert np.array_equal(got, np.asarray(arr, dtype=np.float32))


def test_container_refuses_overwrite(tmp_path):
    path = tmp_path / "d.hno"
    write_container(path, {}, {"a": np.zeros(3)})
    with pytest.raises(FileExistsError, match="refusing to overwrite"):
        write_container(path, {}, {"a": np.ones(3)})
    write_container(path, {}, {"a": np.ones(3)}, force=True)
    _, arrays = read_container(path)
    assert np.array_equal(arrays["a"], np.ones(3, dtype=np.float32))


def test_container_bytes_deterministic(tmp_path):
    metadata = {"b": 2, "a": [1.5, float(np.float64(1) / 3)]}
    arrays = {"x": np.linspace(-1, 1, 17)}
    p1, p2 = tmp_path / "one.hno", tmp_path / "two.hno"
    write_container(p1, metadata, arrays)
    write_container(p2, metadata, arrays)
    assert p1.read_bytes() == p2.read_bytes()


def test_container_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.hno"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="not a dataset container"):
        read_container(path)


def test_container_rejects_unknown_version(tmp_path):
    path = tmp_path / "v9.hno"
    path.write_bytes(CONTAINER_MAGIC + struct.pack("<II", 9, 2) + b"{}")
    with pytest.raises(ValueError, match="version"):
        read_container(path)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def test_grid_1d_layout():
    g = grid_1d(8)
    assert g.shape == (8, 1)
    assert g.dtype == np.float64
    assert np.array_equal(g[:, 0], np.arange(8) / 8)


def test_grid_2d_layout():
    g = grid_2d(4)
    assert g.shape == (16, 2)
    # Row-major raveling of an ij meshgrid: x varies slowest.
    assert np.array_equal(g[0], [0.0, 0.0])
    assert np.array_equal(g[1], [0.0, 0.25])
    assert np.array_equal(g[4], [0.25, 0.0])
    assert np.array_equal(g[15], [0.75, 0.75])


# ---------------------------------------------------------------------------
# 1D generation
# ---------------------------------------------------------------------------

def test_generate_diffusion_reaction_contents(tmp_path):
    out = generate_diffusion_reaction(tmp_path, nu=0.5, rho=1.0, nx=64,
                                      samples=3, test_samples=2, seed=5, nt=64)
    assert set(out) == {"train", "test"}
    meta, arrays = read_container(out["train"])
    assert arrays["input"].shape == (3, 64, 1)
    assert arrays["target"].shape == (3, 64, 1)
    assert arrays["grid"].shape == (64, 1)
    assert meta["problem"] == "diffusion_reaction_1d"
    assert meta["split"] == "train"
    assert meta["seed_range"] == [5, 7]

    # Sample i reproduces the direct solve from seed + i.
    u0 = sample_initial_condition_1d(6, 64)
    traj = solve_diffusion_reaction(u0, DiffusionReactionConfig(nu=0.5, rho=1.0, nx=64, nt=64))
    assert np.array_equal(arrays["input"][1, :, 0], u0.astype(np.float32))
    assert np.array_equal(arrays["target"][1, :, 0], traj[-1].astype(np.float32))

    meta_t, arrays_t = read_container(out["test"])
    assert meta_t["split"] == "test"
    assert meta_t["seed_range"] == [5 + TEST_SEED_OFFSET, 6 + TEST_SEED_OFFSET]
    assert arrays_t["input"].shape == (2, 64, 1)
    # Disjoint seed ranges give different draws.
    assert not np.array_equal(arrays_t["input"][0], arrays["input"][0])


def test_generate_diffusion_reaction_deterministic(tmp_path):
    kwargs = dict(nu=0.2, rho=0.5, nx=32, samples=2, test_samples=1, seed=1, nt=32)
    a = generate_diffusion_reaction(tmp_path / "a", **kwargs)
    b = generate_diffusion_reaction(tmp_path / "b", **kwargs)
    for split in ("train", "test"):
        assert a[split].read_bytes() == b[split].read_bytes()


def test_generate_refuses_overwrite_without_force(tmp_path):
    kwargs = dict(nu=0.2, rho=0.5, nx=32, samples=1, test_samples=1, seed=1, nt=32)
    generate_diffusion_reaction(tmp_path, **kwargs)
    with pytest.raises(FileExistsError, match="refusing to overwrite"):
        generate_diffusion_reaction(tmp_path, **kwargs)
    generate_diffusion_reaction(tmp_path, force=True, **kwargs)


def test_generate_rejects_zero_samples(tmp_path):
    with pytest.raises(ValueError, match="sample count"):
        generate_diffusion_reaction(tmp_path, nu=0.2, rho=0.5, nx=32,
                                    samples=0, test_samples=1, seed=1, nt=32)


# ---------------------------------------------------------------------------
# 2D generation
# ---------------------------------------------------------------------------

def test_generate_navier_stokes_contents(tmp_path):
    out = generate_navier_stokes(tmp_path, nu=1e-3, n=8, samples=2, test_samples=1,
                                 seed=3, T=1.0, snapshots=4, fine_factor=2, dt=2e-2)
    meta, arrays = read_container(out["train"])
    assert arrays["input"].shape == (2, 64, 2)
    assert arrays["target"].shape == (2, 64, 2)
    assert arrays["grid"].shape == (64, 2)
    assert meta["problem"] == "navier_stokes_2d"
    assert meta["input_steps"] == 2 and meta["target_steps"] == 2
    assert meta["fine_n"] == 16
    assert meta["snapshot_times"] == [0.25, 0.5, 0.75, 1.0]
    assert meta["seed_range"] == [3, 4]

    # Sample 0 reproduces the fine solve from seed 3 subsampled to the coarse grid.
    omega0 = sample_grf_2d(GrfSpec(seed=3), 16)
    cfg = NavierStokesConfig(nu=1e-3, n=16, T=1.0, dt=2e-2, record_stride=4.0)
    _, traj = solve_navier_stokes(omega0, cfg)
    coarse = traj[:, ::2, ::2].reshape(4, 64).astype(np.float32)
    assert np.array_equal(arrays["input"][0], coarse[:2].T)
    assert np.array_equal(arrays["target"][0], coarse[2:].T)


def test_generate_navier_stokes_deterministic(tmp_path):
    kwargs = dict(nu=1e-3, n=8, samples=1, test_samples=1, seed=9,
                  T=0.5, snapshots=2, fine_factor=1, dt=2e-2)
    a = generate_navier_stokes(tmp_path / "a", **kwargs)
    b = generate_navier_stokes(tmp_path / "b", **kwargs)
    for split in ("train", "test"):
        assert a[split].read_bytes() == b[split].read_bytes()


def test_generate_navier_stokes_rejects_odd_snapshots(tmp_path):
    with pytest.raises(ValueError, match="even"):
        generate_navier_stokes(tmp_path, nu=1e-3, n=8, samples=1, test_samples=1,
                               seed=0, T=1.0, snapshots=3)


# ---------------------------------------------------------------------------
# Problem dispatch
# ---------------------------------------------------------------------------

def test_generate_dataset_dispatch(tmp_path):
    out = generate_dataset("diffusion-reaction", tmp_path / "dr", nu=0.2, rho=0.5,
                           nx=32, samples=1, test_samples=1, seed=1, nt=32)
    meta, _ = read_container(out["train"])
    assert meta["problem"] == "diffusion_reaction_1d"
    with pytest.raises(ValueError, match="unknown problem"):
        generate_dataset("wave", tmp_path / "w")
