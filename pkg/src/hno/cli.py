"""Command-line interface: `hno generate | train | eval | plot`.

Exit codes: 0 success, 2 usage or validation error, 3 refusal to overwrite
existing outputs, 4 training divergence.

Thread caps (--threads, or the HNO_THREADS environment variable) are applied
to the BLAS/FFT thread environment variables before numpy is imported, which
is why all heavy imports in this module live inside the command functions.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REFUSAL = 3
EXIT_DIVERGED = 4

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_EPOCH_TIMESTAMP = "1970-01-01T00:00:00Z"


class UsageError(Exception):
    """Invalid flags, config keys, or input files; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _configure_threads(threads: int | None) -> int | None:
    if threads is None:
        env = os.environ.get("HNO_THREADS")
        if env is not None:
            try:
                threads = int(env)
            except ValueError as exc:
                raise UsageError(f"HNO_THREADS must be an integer, got {env!r}") from exc
    if threads is None:
        return None
    if threads < 1:
        raise UsageError(f"--threads must be >= 1, got {threads}")
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(threads)
    return threads


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _timestamp(frozen: bool) -> str:
    if frozen:
        return _EPOCH_TIMESTAMP
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _package_version() -> str:
    from . import __version__
    return __version__


def _write_manifest(directory: Path, manifest: dict) -> Path:
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _resolve_data_file(data: str, split: str = "train") -> Path:
    path = Path(data)
    if path.is_dir():
        path = path / f"{split}.hno"
    if not path.is_file():
        raise UsageError(f"dataset file not found: {path}")
    return path


def _load_split(path: Path):
    from .dataset import read_container
    metadata, arrays = read_container(path)
    for name in ("input", "target", "grid"):
        if name not in arrays:
            raise UsageError(f"dataset {path} is missing the '{name}' array")
    return metadata, arrays


def parse_config_file(path, known_keys) -> dict[str, str]:
    """Flat `key = value` file; '#' starts a comment; unknown keys rejected."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known_keys:
            raise UsageError(f"{path}:{lineno}: unknown config key '{key}'")
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    from .dataset import generate_dataset

    if args.samples < 1 or args.test_samples < 1:
        raise UsageError("--samples and --test-samples must be >= 1")
    out_dir = Path(args.out)
    seed = args.seed if args.seed is not None else 0
    kwargs = {"samples": args.samples, "test_samples": args.test_samples,
              "seed": seed, "force": args.force}
    if args.problem == "diffusion-reaction":
        if args.nu is None or args.rho is None:
            raise UsageError("diffusion-reaction requires --nu and --rho")
        kwargs.update(nu=args.nu, rho=args.rho, nx=args.resolution)
        if args.nt is not None:
            kwargs["nt"] = args.nt
    else:
        if args.nu is None:
            raise UsageError("navier-stokes requires --nu")
        kwargs.update(nu=args.nu, n=args.resolution)
        if args.T is not None:
            kwargs["T"] = args.T
        if args.snapshots is not None:
            kwargs["snapshots"] = args.snapshots
        if args.fine_factor is not None:
            kwargs["fine_factor"] = args.fine_factor

    written = generate_dataset(args.problem, out_dir, **kwargs)

    from .dataset import read_container
    hashes = {}
    for split, path in written.items():
        metadata, arrays = read_container(path)
        hashes[split] = _sha256(path)
        print(f"{split}: {path} samples={metadata['samples']} "
              f"input={tuple(arrays['input'].shape)} target={tuple(arrays['target'].shape)}")
    _write_manifest(out_dir, {
        "command": ["generate"] + _replay_flags(args),
        "config": {k: v for k, v in kwargs.items() if k != "force"} | {
            "problem": args.problem, "resolution": args.resolution},
        "dataset_hashes": hashes,
        "code_version": _package_version(),
        "seed": seed,
        "output_paths": {split: str(path) for split, path in written.items()},
        "timestamps": {"finished": _timestamp(frozen=False)},
    })
    return EXIT_OK


def _replay_flags(args) -> list[str]:
    flags = ["--problem", args.problem, "--out", str(args.out),
             "--resolution", str(args.resolution),
             "--samples", str(args.samples), "--test-samples", str(args.test_samples),
             "--seed", str(args.seed if args.seed is not None else 0)]
    for name in ("nu", "rho", "nt", "T", "snapshots", "fine_factor"):
        value = getattr(args, name, None)
        if value is not None:
            flags += [f"--{name.replace('_', '-')}", str(value)]
    return flags


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_CONFIG_INT_KEYS = {"epochs", "batch_size", "seed", "checkpoint_every",
                    "divergence_patience"}
_CONFIG_FLOAT_KEYS = {"lr0", "lr_floor", "dropout", "curriculum_gamma0",
                      "curriculum_end_fraction", "val_fraction", "grad_clip",
                      "divergence_factor"}
_CONFIG_STR_KEYS = {"walltime", "preset"}
_CONFIG_KEYS = _CONFIG_INT_KEYS | _CONFIG_FLOAT_KEYS | _CONFIG_STR_KEYS


def _coerce_config(raw: dict[str, str]) -> dict:
    out: dict = {}
    for key, value in raw.items():
        try:
            if key in _CONFIG_INT_KEYS:
                out[key] = int(value)
            elif key in _CONFIG_FLOAT_KEYS:
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError as exc:
            raise UsageError(f"config key '{key}' has invalid value {value!r}") from exc
    return out


def _build_model_for_dataset(preset_name: str | None, metadata: dict, seed: int):
    from .model import PRESETS, HyenaNeuralOperator, preset

    problem = metadata.get("problem")
    if preset_name is None:
        if problem == "diffusion_reaction_1d":
            preset_name = "diffusion_reaction_1d"
        elif problem == "navier_stokes_2d":
            preset_name = "navier_stokes_2d_desk"
        else:
            raise UsageError(f"cannot infer a model preset for problem {problem!r}; "
                             f"pass --preset (one of {sorted(PRESETS)})")
    preset_name = preset_name.replace("-", "_")
    if preset_name not in PRESETS:
        raise UsageError(f"unknown preset '{preset_name}'; available: {sorted(PRESETS)}")
    if problem == "diffusion_reaction_1d":
        cfg = preset(preset_name, seq_len=int(metadata["nx"]))
    else:
        cfg = preset(preset_name, n=int(metadata["n"]),
                     t_out=int(metadata["target_steps"]),
                     input_steps=int(metadata["input_steps"]))
    if cfg.problem != problem:
        raise UsageError(f"preset '{preset_name}' targets problem '{cfg.problem}', "
                         f"but the dataset is '{problem}'")
    return HyenaNeuralOperator(cfg, seed=seed)


def cmd_train(args) -> int:
    from .model import build_from_checkpoint
    from .training import DivergenceError, Normalizer, TrainConfig, train

    data_path = _resolve_data_file(args.data, "train")
    data = _load_split(data_path)
    metadata = data[0]

    overrides: dict = {}
    if args.config:
        overrides.update(_coerce_config(parse_config_file(args.config, _CONFIG_KEYS)))
    for key in ("epochs", "batch_size", "lr0", "val_fraction", "walltime",
                "curriculum_gamma0", "dropout", "checkpoint_every"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    preset_name = overrides.pop("preset", None)
    if args.preset is not None:
        preset_name = args.preset

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists() and not (args.force or args.resume):
        print(f"error: {manifest_path} exists; pass --force to overwrite",
              file=sys.stderr)
        return EXIT_REFUSAL

    resume_state = None
    if args.resume:
        ckpt = Path(args.resume)
        if not ckpt.is_file():
            raise UsageError(f"resume checkpoint not found: {ckpt}")
        model, manifest, extras = build_from_checkpoint(ckpt)
        stored = dict(manifest["state"].get("train_config", {}))
        stored.pop("preset", None)
        cfg = TrainConfig(**{**stored, **overrides})
        resume_state = {
            "state": manifest["state"],
            "normalizer": Normalizer.from_extras(extras),
            "adam_m": [extras[f"adam.m.{n}"] for n, _ in model.parameters()],
            "adam_v": [extras[f"adam.v.{n}"] for n, _ in model.parameters()],
        }
    else:
        try:
            cfg = TrainConfig(**overrides)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid training configuration: {exc}") from exc
        model = _build_model_for_dataset(preset_name, metadata, cfg.seed)

    frozen = cfg.walltime == "zero"
    started = _timestamp(frozen)
    print(f"training {model.config.problem} model: {model.parameter_count()} parameters, "
          f"{cfg.epochs} epochs, batch {cfg.batch_size}, seed {cfg.seed}")

    def progress(epoch, train_loss, val_loss, horizon):
        print(f"epoch {epoch:4d}  horizon {horizon:3d}  "
              f"train {train_loss:.5f}  val {val_loss:.5f}", flush=True)

    try:
        result = train(model, data, cfg, out_dir=out_dir,
                       resume=resume_state, progress=progress)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    _write_manifest(out_dir, {
        "command": ["train", "--data", str(args.data), "--out", str(args.out)]
                   + (["--resume", str(args.resume)] if args.resume else []),
        "config": {**vars(cfg), "preset": preset_name},
        "dataset_hashes": {"train": _sha256(data_path)},
        "code_version": _package_version(),
        "seed": cfg.seed,
        "output_paths": {"best": str(result.best_path), "final": str(result.final_path),
                         "log": str(out_dir / "train_log.csv")},
        "timestamps": {"started": started, "finished": _timestamp(frozen)},
        "best_val_rel_l2": result.best_val,
        "best_epoch": result.best_epoch,
        "parameter_count": model.parameter_count(),
    })
    print(f"best val rel-L2 {result.best_val:.5f} at epoch {result.best_epoch}; "
          f"checkpoints in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _load_model_for_data(checkpoint: str, arrays) -> tuple:
    from .model import build_from_checkpoint
    from .training import Normalizer

    seq_len = arrays["grid"].shape[0]
    try:
        model, manifest, extras = build_from_checkpoint(checkpoint, seq_len=seq_len)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"cannot load checkpoint {checkpoint}: {exc}") from exc
    if "norm.input_mean" in extras:
        normalizer = Normalizer.from_extras(extras)
    else:
        normalizer = Normalizer.identity(model.config.input_channels,
                                         model.config.t_out)
    return model, manifest, normalizer


def cmd_eval(args) -> int:
    from .training import evaluate

    data_path = _resolve_data_file(args.data, "test")
    metadata, arrays = _load_split(data_path)
    model, manifest, normalizer = _load_model_for_data(args.checkpoint, arrays)
    if model.config.problem != metadata.get("problem"):
        raise UsageError(f"checkpoint problem '{model.config.problem}' does not match "
                         f"dataset problem '{metadata.get('problem')}'")
    if arrays["input"].shape[2] != model.config.input_channels:
        raise UsageError(f"dataset has {arrays['input'].shape[2]} input channels, "
                         f"checkpoint expects {model.config.input_channels}")

    report = evaluate(model, normalizer, (metadata, arrays), chunk=args.batch)
    report.update({
        "checkpoint": str(args.checkpoint),
        "checkpoint_sha256": _sha256(Path(args.checkpoint)),
        "dataset": str(data_path),
        "dataset_sha256": _sha256(data_path),
        "problem": metadata.get("problem"),
        "code_version": _package_version(),
    })
    print(f"relative L2 on {report['samples']} samples: "
          f"mean {report['mean']:.5f}  std {report['std']:.5f}")
    if len(report["per_step_mean"]) > 1:
        steps = "  ".join(f"{v:.4f}" for v in report["per_step_mean"])
        print(f"per-step mean: {steps}")
    if args.out:
        out_path = Path(args.out)
        if out_path.parent != Path():
            out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
        print(f"wrote {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def cmd_plot(args) -> int:
    import numpy as np

    from .dataset import write_container
    from .training import predict
    from .viz import save_field_ppm, save_profile_csv

    data_path = _resolve_data_file(args.data, "test")
    metadata, arrays = _load_split(data_path)
    n_samples = arrays["input"].shape[0]
    if not 0 <= args.sample_index < n_samples:
        raise UsageError(f"--sample-index {args.sample_index} out of range "
                         f"[0, {n_samples - 1}]")
    model, manifest, normalizer = _load_model_for_data(args.checkpoint, arrays)
    if model.config.problem != metadata.get("problem"):
        raise UsageError(f"checkpoint problem '{model.config.problem}' does not match "
                         f"dataset problem '{metadata.get('problem')}'")

    idx = args.sample_index
    grid = arrays["grid"]
    horizon = min(model.config.t_out, arrays["target"].shape[-1])
    pred = predict(model, normalizer, arrays["input"][idx:idx + 1], grid,
                   horizon=horizon)[0]
    truth = arrays["target"][idx, :, :horizon]

    out = Path(args.out)
    if model.config.problem == "diffusion_reaction_1d":
        path = out if out.suffix == ".csv" else out / "profile.csv"
        if path.parent != Path():
            path.parent.mkdir(parents=True, exist_ok=True)
        save_profile_csv(path, grid[:, 0], truth[:, 0], pred[:, 0])
        print(f"wrote {path}")
        return EXIT_OK

    n = int(round(np.sqrt(grid.shape[0])))
    out.mkdir(parents=True, exist_ok=True)
    # One shared signed scale across panels and steps keeps colors comparable.
    vmax = float(max(np.abs(truth).max(), np.abs(pred).max())) or 1.0
    for k in range(horizon):
        t_field = truth[:, k].reshape(n, n)
        p_field = pred[:, k].reshape(n, n)
        save_field_ppm(out / f"truth_step{k + 1:02d}.ppm", t_field, vmax)
        save_field_ppm(out / f"prediction_step{k + 1:02d}.ppm", p_field, vmax)
        save_field_ppm(out / f"error_step{k + 1:02d}.ppm",
                       np.abs(p_field - t_field), vmax)
    write_container(out / "fields.hno", {
        "problem": metadata.get("problem"),
        "sample_index": idx,
        "horizon": horizon,
        "n": n,
        "checkpoint": str(args.checkpoint),
        "panels": "truth, prediction, abs error",
    }, {
        "truth": truth.reshape(n, n, horizon),
        "prediction": pred.reshape(n, n, horizon),
        "abs_error": np.abs(pred - truth).reshape(n, n, horizon),
    }, force=True)
    print(f"wrote {3 * horizon} PPM panel(s) and fields.hno to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="cap BLAS/FFT threads (env HNO_THREADS as fallback)")

    parser = argparse.ArgumentParser(
        prog="hno",
        description="Hyena neural operator toolkit: data generation, training, "
                    "evaluation, and figure emission.",
        parents=[common])
    sub = parser.add_subparsers(dest="cmd", required=True, metavar="command")

    p = sub.add_parser("generate", parents=[common],
                       help="generate a PDE dataset (train + test containers)")
    p.add_argument("--problem", required=True,
                   choices=["diffusion-reaction", "navier-stokes"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resolution", type=int, required=True,
                   help="grid points per dimension")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--test-samples", type=int, required=True)
    p.add_argument("--nu", type=float, help="viscosity / diffusivity")
    p.add_argument("--rho", type=float, help="reaction rate (1D)")
    p.add_argument("--nt", type=int, help="1D solver time steps (default 512)")
    p.add_argument("--T", type=float, help="2D horizon in time units (default 10)")
    p.add_argument("--snapshots", type=int,
                   help="2D snapshot count, half input / half target (default 20)")
    p.add_argument("--fine-factor", type=int,
                   help="2D solver grid refinement over the stored grid (default 4)")
    p.add_argument("--force", action="store_true",
                   help="overwrite existing dataset files")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common],
                       help="train a model on a generated dataset")
    p.add_argument("--data", required=True, help="dataset directory or train.hno")
    p.add_argument("--out", required=True, help="run directory for checkpoints/logs")
    p.add_argument("--config", help="flat key = value training config file")
    p.add_argument("--preset", help="model preset name")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--curriculum-gamma0", dest="curriculum_gamma0", type=float)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--walltime", choices=["real", "zero"],
                   help="'zero' freezes wall-clock fields for byte-stable logs")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="compute relative-L2 metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory or .hno file")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--batch", type=int, default=8, help="evaluation batch size")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", parents=[common],
                       help="emit truth/prediction figures for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory or .hno file")
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--out", required=True,
                   help="CSV path (1D) or output directory (2D)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "seed"):
        args.seed = None
    try:
        _configure_threads(getattr(args, "threads", None))
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFUSAL
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
