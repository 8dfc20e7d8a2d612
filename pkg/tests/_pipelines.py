"""Desk-scale pipeline runners shared by the acceptance tests.

The end-to-end training criteria cost hours of single-core compute, so each
pipeline caches its artifacts under artifacts/acceptance/<name>/ along with
the exact step list that produced them.  A cached pipeline is reused only
when the recorded steps match the current plan; delete the directory (or
change any flag below) and the next call rebuilds everything from scratch.

Step kinds:
  ["cli", ...argv]  -- run hno.cli.main(argv) in-process
  ["sub", ...argv]  -- run the CLI in a fresh subprocess (process isolation)
  ["#...", ...]     -- python-side step handled by _run_special
"""

from __future__ import annotations

import hashlib
import json
import shutil
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / "artifacts" / "acceptance"


def _run_cli(argv: list[str]) -> None:
    from hno.cli import main

    rc = main(argv)
    if rc != 0:
        raise RuntimeError(f"hno {' '.join(argv)} exited with code {rc}")


def _run_subprocess(argv: list[str]) -> None:
    cmd = [sys.executable, "-c",
           "import sys; from hno.cli import main; sys.exit(main(sys.argv[1:]))",
           *argv]
    proc = subprocess.run(cmd, cwd=ROOT)
    if proc.returncode != 0:
        raise RuntimeError(f"hno {' '.join(argv)} exited with code {proc.returncode}")


def _run_special(step: list[str]) -> None:
    kind = step[0]
    if kind == "#untrained-checkpoint":
        # A fresh preset model saved without normalizer statistics: evaluating
        # it exercises the identity-normalization fallback and gives the
        # untrained-model baseline.
        _, preset_name, seq_len, path = step
        from hno.model import HyenaNeuralOperator, preset, save_checkpoint

        model = HyenaNeuralOperator(preset(preset_name, seq_len=int(seq_len)), seed=0)
        save_checkpoint(path, model)
    elif kind == "#depends":
        pass  # plan-signature entry only; nothing to execute
    else:
        raise ValueError(f"unknown pipeline step {step!r}")


def _execute(plan: list[list[str]]) -> None:
    for step in plan:
        if step[0] == "cli":
            _run_cli(step[1:])
        elif step[0] == "sub":
            _run_subprocess(step[1:])
        else:
            _run_special(step)


def _ensure(directory: Path, plan: list[list]) -> Path:
    """Build `plan` into `directory` unless an identical build is cached."""
    want = [[str(part) for part in step] for step in plan]
    record = directory / "steps.json"
    if record.is_file() and json.loads(record.read_text()) == want:
        return directory
    if directory.exists():
        shutil.rmtree(directory)
    directory.mkdir(parents=True)
    t0 = time.perf_counter()
    durations = []
    for step in want:
        s0 = time.perf_counter()
        _execute([step])
        durations.append(round(time.perf_counter() - s0, 3))
    (directory / "build_info.json").write_text(json.dumps(
        {"total_s": round(time.perf_counter() - t0, 3),
         "step_s": durations}, indent=1) + "\n", encoding="utf-8")
    record.write_text(json.dumps(want, indent=1) + "\n", encoding="utf-8")
    return directory


def build_seconds(directory: Path) -> float | None:
    """Wall-clock build time: recorded if available, else estimated from
    artifact mtimes (builds made before timing was recorded)."""
    info = directory / "build_info.json"
    if info.is_file():
        return float(json.loads(info.read_text())["total_s"])
    record = directory / "steps.json"
    if not record.is_file():
        return None
    paths = [p for p in directory.rglob("*") if p.is_file()]
    times = [p.stat().st_mtime for p in paths]
    return max(times) - min(times) if times else None


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# 1D end-to-end run: 200/50 samples at nx=256, 40 epochs (hours of compute)
# ---------------------------------------------------------------------------

def ensure_train_1d() -> Path:
    d = CACHE / "train_1d"
    data, run, ev = d / "data", d / "run", d / "eval"
    plan = [
        ["cli", "generate", "--problem", "diffusion-reaction", "--nu", "0.5",
         "--rho", "1.0", "--resolution", "256", "--samples", "200",
         "--test-samples", "50", "--seed", "0", "--out", data],
        ["#untrained-checkpoint", "diffusion_reaction_1d", "256",
         d / "untrained.ckpt"],
        ["cli", "train", "--data", data, "--out", run,
         "--preset", "diffusion_reaction_1d", "--epochs", "40",
         "--batch-size", "20", "--lr0", "0.0005", "--walltime", "zero",
         "--seed", "0"],
        ["cli", "eval", "--checkpoint", run / "best.ckpt", "--data", data,
         "--out", ev / "report.json"],
        ["cli", "eval", "--checkpoint", d / "untrained.ckpt", "--data", data,
         "--out", ev / "untrained_report.json"],
    ]
    return _ensure(d, plan)


# ---------------------------------------------------------------------------
# 2D end-to-end run: 100/20 samples at n=32, 60 epochs, with and without the
# horizon curriculum (hours of compute)
# ---------------------------------------------------------------------------

def ensure_train_2d() -> Path:
    d = CACHE / "train_2d"
    data = d / "data"
    common = ["--data", data, "--preset", "navier_stokes_2d_desk",
              "--epochs", "60", "--batch-size", "10", "--lr0", "0.003",
              "--walltime", "zero", "--seed", "0"]
    plan = [
        ["cli", "generate", "--problem", "navier-stokes", "--nu", "0.001",
         "--resolution", "32", "--samples", "100", "--test-samples", "20",
         "--seed", "0", "--T", "10", "--snapshots", "10", "--fine-factor", "2",
         "--out", data],
        ["cli", "train", "--out", d / "run_curriculum",
         "--curriculum-gamma0", "0.5", *common],
        ["cli", "train", "--out", d / "run_plain",
         "--curriculum-gamma0", "1.0", *common],
        ["cli", "eval", "--checkpoint", d / "run_curriculum" / "best.ckpt",
         "--data", data, "--out", d / "eval" / "report.json"],
    ]
    return _ensure(d, plan)


# ---------------------------------------------------------------------------
# Determinism: generate -> train 5 epochs -> eval, twice, in fresh processes
# ---------------------------------------------------------------------------

def ensure_determinism() -> Path:
    d = CACHE / "determinism"
    plan = []
    for leg in ("a", "b"):
        data, run, ev = d / leg / "data", d / leg / "run", d / leg / "eval"
        plan += [
            ["sub", "generate", "--problem", "diffusion-reaction", "--nu", "0.5",
             "--rho", "1.0", "--resolution", "64", "--samples", "16",
             "--test-samples", "4", "--seed", "11", "--out", data],
            ["sub", "train", "--data", data, "--out", run,
             "--preset", "diffusion_reaction_1d", "--epochs", "5",
             "--batch-size", "8", "--lr0", "0.001", "--walltime", "zero",
             "--seed", "3", "--threads", "1"],
            ["sub", "eval", "--checkpoint", run / "final.ckpt", "--data", data,
             "--out", ev / "report.json", "--threads", "1"],
        ]
    return _ensure(d, plan)


# ---------------------------------------------------------------------------
# Resolution transfer: evaluate the nx=256 model on an nx=512 test set
# ---------------------------------------------------------------------------

def ensure_transfer_512() -> Path:
    c6 = ensure_train_1d()
    checkpoint = c6 / "run" / "best.ckpt"
    d = CACHE / "transfer_512"
    data = d / "data"
    plan = [
        ["#depends", _sha256(checkpoint)],
        ["cli", "generate", "--problem", "diffusion-reaction", "--nu", "0.5",
         "--rho", "1.0", "--resolution", "512", "--samples", "1",
         "--test-samples", "50", "--seed", "0", "--out", data],
        ["cli", "eval", "--checkpoint", checkpoint, "--data", data,
         "--out", d / "eval" / "report.json"],
    ]
    return _ensure(d, plan)
