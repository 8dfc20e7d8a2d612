"""Training harness: relative-L2 loss/metric, Adam, cosine learning-rate
schedule, curriculum horizon scheduling, and the training loop.

Determinism contract: given (seed, thread count) every run is bit-reproducible.
Shuffling uses a Generator keyed on [seed, epoch], dropout on
[seed, epoch, batch, 7], so resuming at an epoch boundary replays exactly the
arithmetic of an uninterrupted run. Inputs and targets are standardized
per-channel with training-split statistics; the statistics travel inside the
checkpoint and every reported metric is computed on de-standardized
(physical) fields.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .model import HyenaNeuralOperator, save_checkpoint
from .tensor import Tape, Tensor

__all__ = [
    "DivergenceError",
    "TrainConfig",
    "TrainLog",
    "Normalizer",
    "relative_l2",
    "AdamState",
    "adam_step",
    "cosine_lr",
    "curriculum_horizon",
    "train",
    "TrainResult",
    "evaluate",
    "predict",
]


class DivergenceError(RuntimeError):
    """Raised when the training loss runs away from its initial level."""


# ---------------------------------------------------------------------------
# Loss and metric
# ---------------------------------------------------------------------------

def relative_l2(pred, target):
    """Mean over the batch of ||pred_b - target_b|| / ||target_b|| (flattened).

    Tensor `pred` builds a differentiable graph; numpy `pred` computes a plain
    number. Samples with a zero-norm target are excluded with a warning.
    """
    tdata = target.data if isinstance(target, Tensor) else np.asarray(target)
    b = tdata.shape[0]
    den = np.linalg.norm(tdata.reshape(b, -1).astype(np.float64), axis=1)
    valid = den > 0
    if not valid.any():
        raise ValueError("relative_l2: every target sample has zero norm")
    if not valid.all():
        warnings.warn(f"relative_l2: excluded {int((~valid).sum())} zero-norm target sample(s)")
    if isinstance(pred, Tensor):
        if pred.shape != tdata.shape:
            raise T.ShapeError(f"prediction shape {pred.shape} != target shape {tdata.shape}")
        weights = np.where(valid, 1.0 / np.where(valid, den, 1.0), 0.0) / valid.sum()
        diff = T.sub(T.reshape(pred, (b, -1)), tdata.reshape(b, -1).astype(pred.dtype))
        norms = T.sqrt(T.tsum(T.mul(diff, diff), axis=1))
        return T.tsum(T.mul(norms, weights.astype(pred.dtype)))
    pred = np.asarray(pred)
    if pred.shape != tdata.shape:
        raise T.ShapeError(f"prediction shape {pred.shape} != target shape {tdata.shape}")
    num = np.linalg.norm((pred - tdata).reshape(b, -1).astype(np.float64), axis=1)
    return float((num[valid] / den[valid]).mean())


# ---------------------------------------------------------------------------
# Optimizer and schedules
# ---------------------------------------------------------------------------

class AdamState:
    def __init__(self, params: list[tuple[str, Tensor]]):
        self.step = 0
        self.m = [np.zeros_like(p.data) for _, p in params]
        self.v = [np.zeros_like(p.data) for _, p in params]


def adam_step(params: list[tuple[str, Tensor]], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              grads: list[np.ndarray] | None = None) -> None:
    """Bias-corrected Adam update in place; `grads` defaults to each `.grad`."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i, (name, p) in enumerate(params):
        g = grads[i] if grads is not None else p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise RuntimeError(f"non-finite gradient for parameter '{name}'")
        m = state.m[i]
        v = state.v[i]
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + eps)


def cosine_lr(step: int, total_steps: int, lr0: float = 1e-4,
              floor: float = 1e-8) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return floor + 0.5 * (lr0 - floor) * (1.0 + np.cos(np.pi * step / total_steps))


def curriculum_horizon(epoch: int, total_epochs: int, gamma0: float, T_steps: int,
                       end_fraction: float = 0.5) -> int:
    """Linear ramp from ceil(gamma0*T) at epoch 0 to T at epoch
    ceil(end_fraction*total_epochs), constant afterwards."""
    if not 0 < gamma0 <= 1:
        raise ValueError(f"gamma0 must be in (0, 1], got {gamma0}")
    if not 0 < end_fraction <= 1:
        raise ValueError(f"end_fraction must be in (0, 1], got {end_fraction}")
    h0 = int(np.ceil(gamma0 * T_steps))
    e_end = max(1, int(np.ceil(end_fraction * total_epochs)))
    if epoch >= e_end:
        h = T_steps
    else:
        h = h0 + int((T_steps - h0) * epoch / e_end)
    return max(1, min(T_steps, h))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass
class Normalizer:
    """Per-channel standardization fit on the training split."""

    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    @classmethod
    def fit(cls, inputs: np.ndarray, targets: np.ndarray) -> "Normalizer":
        def stats(a):
            mean = a.mean(axis=(0, 1), dtype=np.float64)
            std = np.maximum(a.std(axis=(0, 1), dtype=np.float64), 1e-8)
            return mean.astype(np.float32), std.astype(np.float32)

        im, istd = stats(inputs)
        tm, tstd = stats(targets)
        return cls(im, istd, tm, tstd)

    @classmethod
    def identity(cls, in_channels: int, target_channels: int) -> "Normalizer":
        return cls(np.zeros(in_channels, np.float32), np.ones(in_channels, np.float32),
                   np.zeros(target_channels, np.float32), np.ones(target_channels, np.float32))

    def apply_input(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.input_mean) / self.input_std).astype(np.float32)

    def apply_target(self, y: np.ndarray, horizon: int | None = None) -> np.ndarray:
        h = y.shape[-1] if horizon is None else horizon
        return ((y[..., :h] - self.target_mean[:h]) / self.target_std[:h]).astype(np.float32)

    def invert_output(self, y: np.ndarray) -> np.ndarray:
        h = y.shape[-1]
        return y * self.target_std[:h] + self.target_mean[:h]

    def as_extras(self) -> dict[str, np.ndarray]:
        return {"norm.input_mean": self.input_mean, "norm.input_std": self.input_std,
                "norm.target_mean": self.target_mean, "norm.target_std": self.target_std}

    @classmethod
    def from_extras(cls, extras: dict[str, np.ndarray]) -> "Normalizer":
        return cls(extras["norm.input_mean"], extras["norm.input_std"],
                   extras["norm.target_mean"], extras["norm.target_std"])


# ---------------------------------------------------------------------------
# Configuration and logging
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    lr0: float = 1e-4
    lr_floor: float = 1e-8
    epochs: int = 500
    batch_size: int = 20
    dropout: float = 0.03
    curriculum_gamma0: float = 0.5
    curriculum_end_fraction: float = 0.5
    seed: int = 0
    val_fraction: float = 0.1
    grad_clip: float = 1.0
    walltime: str = "real"            # "real" | "zero" (byte-stable logs)
    checkpoint_every: int = 0         # 0: best + final only
    divergence_factor: float = 10.0
    divergence_patience: int = 3

    def __post_init__(self):
        if not 0 < self.curriculum_gamma0 <= 1:
            raise ValueError(f"curriculum_gamma0 must be in (0, 1], got {self.curriculum_gamma0}")
        if self.lr_floor >= self.lr0:
            raise ValueError(f"lr floor {self.lr_floor} must be below lr0 {self.lr0}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.walltime not in ("real", "zero"):
            raise ValueError(f"walltime must be 'real' or 'zero', got '{self.walltime}'")

    def total_steps(self, n_train: int, batch_size: int | None = None) -> int:
        b = self.batch_size if batch_size is None else batch_size
        return self.epochs * int(np.ceil(n_train / b))


@dataclass
class TrainLog:
    step_losses: list[float] = field(default_factory=list)
    epochs: list[int] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    horizons: list[int] = field(default_factory=list)
    train_rel_l2: list[float] = field(default_factory=list)
    val_rel_l2: list[float] = field(default_factory=list)
    wall_s: list[float] = field(default_factory=list)

    CSV_HEADER = "epoch,step,lr,horizon,train_rel_l2,val_rel_l2,wall_s"

    def to_csv(self, path) -> None:
        lines = [self.CSV_HEADER]
        for i in range(len(self.epochs)):
            lines.append(
                f"{self.epochs[i]},{self.steps[i]},{self.lrs[i]:.10e},{self.horizons[i]},"
                f"{self.train_rel_l2[i]:.10e},{self.val_rel_l2[i]:.10e},{self.wall_s[i]:.6f}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class TrainResult:
    log: TrainLog
    best_val: float
    best_epoch: int
    normalizer: Normalizer
    best_path: Path | None
    final_path: Path | None


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------

def _global_grad_clip(params, clip: float) -> None:
    if clip <= 0:
        return
    total = 0.0
    for _, p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > clip:
        scale = clip / norm
        for _, p in params:
            if p.grad is not None:
                p.grad *= scale


def _forward_eval(model, inputs, grid, horizon, chunk: int = 8) -> np.ndarray:
    outs = []
    for i in range(0, inputs.shape[0], chunk):
        outs.append(model.forward(inputs[i:i + chunk], grid, horizon=horizon).data)
    return np.concatenate(outs, axis=0)


def train(model: HyenaNeuralOperator, data: tuple[dict, dict[str, np.ndarray]],
          cfg: TrainConfig, out_dir=None, resume: dict | None = None,
          progress=None) -> TrainResult:
    """Train on a loaded dataset split (metadata, arrays).

    `resume`: {"state": ..., "adam_m": [...], "adam_v": [...], "normalizer": ...}
    as produced by reading a final checkpoint; continues the original schedule.
    Writes best.ckpt and final.ckpt when out_dir is given.
    """
    metadata, arrays = data
    inputs, targets, grid = arrays["input"], arrays["target"], arrays["grid"]
    n_samples = inputs.shape[0]
    n_val = int(round(cfg.val_fraction * n_samples))
    if n_val == 0 and cfg.val_fraction > 0 and n_samples > 1:
        n_val = 1
    n_train = n_samples - n_val
    if n_train < 1:
        raise ValueError(f"no training samples left (total {n_samples}, val {n_val})")
    train_in, train_tg = inputs[:n_train], targets[:n_train]
    val_in, val_tg = inputs[n_train:], targets[n_train:]

    t_out = model.config.t_out
    steps_per_epoch = int(np.ceil(n_train / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch

    params = model.parameters()
    if resume is not None:
        normalizer = resume["normalizer"]
        adam = AdamState(params)
        adam.step = int(resume["state"]["adam_step"])
        for i, (m, v) in enumerate(zip(resume["adam_m"], resume["adam_v"])):
            adam.m[i] = m.astype(np.float32).reshape(adam.m[i].shape)
            adam.v[i] = v.astype(np.float32).reshape(adam.v[i].shape)
        start_epoch = int(resume["state"]["epoch"]) + 1
        global_step = int(resume["state"]["global_step"])
        best_val = float(resume["state"]["best_val"])
        best_epoch = int(resume["state"]["best_epoch"])
        initial_loss = resume["state"].get("initial_loss")
    else:
        normalizer = Normalizer.fit(train_in, train_tg)
        adam = AdamState(params)
        start_epoch, global_step = 0, 0
        best_val, best_epoch = np.inf, -1
        initial_loss = None

    train_in_std = normalizer.apply_input(train_in)
    val_in_std = normalizer.apply_input(val_in) if n_val else None

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / "best.ckpt" if out_dir else None
    final_path = out_dir / "final.ckpt" if out_dir else None
    log_path = out_dir / "train_log.csv" if out_dir else None

    log = TrainLog()
    diverged_streak = 0

    def state_dict(epoch):
        return {"epoch": epoch, "global_step": global_step, "adam_step": adam.step,
                "best_val": float(best_val), "best_epoch": best_epoch,
                "initial_loss": initial_loss,
                "total_steps": total_steps, "steps_per_epoch": steps_per_epoch,
                "train_samples": n_train, "val_samples": n_val,
                "train_config": vars(cfg).copy(), "dataset": metadata}

    def write_ckpt(path, epoch):
        extras = dict(normalizer.as_extras())
        for i, (name, _) in enumerate(params):
            extras[f"adam.m.{name}"] = adam.m[i]
            extras[f"adam.v.{name}"] = adam.v[i]
        save_checkpoint(path, model, extras=extras, state=state_dict(epoch))

    for epoch in range(start_epoch, cfg.epochs):
        t_epoch = time.perf_counter()
        horizon = curriculum_horizon(epoch, cfg.epochs, cfg.curriculum_gamma0,
                                     t_out, cfg.curriculum_end_fraction)
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(n_train)
        epoch_losses = []
        lr = cosine_lr(global_step, total_steps, cfg.lr0, cfg.lr_floor)
        for bi in range(steps_per_epoch):
            idx = perm[bi * cfg.batch_size:(bi + 1) * cfg.batch_size]
            xb = train_in_std[idx]
            yb = normalizer.apply_target(train_tg[idx], horizon)
            drop_rng = np.random.default_rng([cfg.seed, epoch, bi, 7])
            lr = cosine_lr(global_step, total_steps, cfg.lr0, cfg.lr_floor)
            with Tape():
                pred = model.forward(xb, grid, horizon=horizon,
                                     training=True, rng=drop_rng)
                loss = relative_l2(pred, yb)
                loss.backward()
            loss_val = loss.item()
            _global_grad_clip(params, cfg.grad_clip)
            adam_step(params, adam, lr)
            T.zero_grads([p for _, p in params])
            epoch_losses.append(loss_val)
            log.step_losses.append(loss_val)
            global_step += 1

        epoch_loss = float(np.mean(epoch_losses))
        if initial_loss is None:
            initial_loss = epoch_loss
        if epoch_loss > cfg.divergence_factor * initial_loss:
            diverged_streak += 1
            if diverged_streak >= cfg.divergence_patience:
                raise DivergenceError(
                    f"loss {epoch_loss:.3g} exceeded {cfg.divergence_factor:.0f}x the "
                    f"initial {initial_loss:.3g} for {diverged_streak} consecutive epochs")
        else:
            diverged_streak = 0

        if n_val:
            val_pred = normalizer.invert_output(
                _forward_eval(model, val_in_std, grid, t_out))
            val_loss = relative_l2(val_pred, val_tg[..., :t_out])
        else:
            val_loss = epoch_loss
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            if best_path:
                write_ckpt(best_path, epoch)

        log.epochs.append(epoch)
        log.steps.append(global_step)
        log.lrs.append(float(lr))
        log.horizons.append(horizon)
        log.train_rel_l2.append(epoch_loss)
        log.val_rel_l2.append(float(val_loss))
        log.wall_s.append(0.0 if cfg.walltime == "zero"
                          else time.perf_counter() - t_epoch)
        if log_path:
            log.to_csv(log_path)
        if cfg.checkpoint_every and final_path and (epoch + 1) % cfg.checkpoint_every == 0:
            write_ckpt(final_path, epoch)
        if progress:
            progress(epoch, epoch_loss, float(val_loss), horizon)

    if final_path:
        write_ckpt(final_path, cfg.epochs - 1)
        if best_path and not best_path.exists():
            write_ckpt(best_path, cfg.epochs - 1)
    return TrainResult(log, float(best_val), best_epoch, normalizer, best_path, final_path)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def predict(model: HyenaNeuralOperator, normalizer: Normalizer, inputs: np.ndarray,
            grid: np.ndarray, horizon: int | None = None, chunk: int = 8) -> np.ndarray:
    """De-standardized model predictions for physical-space inputs."""
    x = normalizer.apply_input(np.asarray(inputs, dtype=np.float32))
    h = model.config.t_out if horizon is None else horizon
    return normalizer.invert_output(_forward_eval(model, x, grid, h, chunk=chunk))


def evaluate(model: HyenaNeuralOperator, normalizer: Normalizer, data,
             chunk: int = 8) -> dict:
    """Per-sample relative L2 on a dataset split, plus a per-step mean curve."""
    _, arrays = data
    inputs, targets, grid = arrays["input"], arrays["target"], arrays["grid"]
    h = min(model.config.t_out, targets.shape[-1])
    preds = predict(model, normalizer, inputs, grid, horizon=h, chunk=chunk)
    tg = targets[..., :h]
    b = inputs.shape[0]
    num = np.linalg.norm((preds - tg).reshape(b, -1).astype(np.float64), axis=1)
    den = np.linalg.norm(tg.reshape(b, -1).astype(np.float64), axis=1)
    per_sample = num / den
    step_num = np.linalg.norm((preds - tg).astype(np.float64), axis=1)
    step_den = np.linalg.norm(tg.astype(np.float64), axis=1)
    per_step = (step_num / step_den).mean(axis=0)
    return {
        "per_sample": [float(x) for x in per_sample],
        "mean": float(per_sample.mean()),
        "std": float(per_sample.std()),
        "per_step_mean": [float(x) for x in per_step],
        "horizon": int(h),
        "samples": int(b),
    }
