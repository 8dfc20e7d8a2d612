"""A complete operator-learning run in about a minute.

Everything the command-line interface does is plain library code; this
script strings it together at toy scale: sample a dataset from the 1D
solver, fit the small preset model on it, evaluate on held-out samples,
and write a truth-vs-prediction profile you can plot with any tool.

Run from the repository root:  python3 demos/train_tiny_operator.py
"""

import tempfile
from pathlib import Path

from hno.dataset import generate_diffusion_reaction, read_container
from hno.model import HyenaNeuralOperator, preset
from hno.training import Normalizer, TrainConfig, evaluate, predict, train
from hno.viz import save_profile_csv

work = Path(tempfile.mkdtemp(prefix="hno_demo_"))

# 1. Data: 24 initial conditions pushed through the diffusion-reaction solver.
#    Each sample maps the state at t=0 to the state at t=1.
generate_diffusion_reaction(work, nu=0.5, rho=1.0, nx=32, samples=24,
                            test_samples=6, seed=0)
train_split = read_container(work / "train.hno")
test_split = read_container(work / "test.hno")
print(f"dataset in {work}: {train_split[1]['input'].shape[0]} train / "
      f"{test_split[1]['input'].shape[0]} test samples at nx=32")

# 2. Model and training configuration. The tiny preset keeps this quick;
#    swap in preset("diffusion_reaction_1d", seq_len=32) for the real one.
model = HyenaNeuralOperator(preset("tiny_1d", seq_len=32), seed=0)
config = TrainConfig(lr0=5e-3, epochs=30, batch_size=6, val_fraction=0.25, seed=0)
print(f"model: {model.parameter_count()} parameters")

# Baseline before any training: the raw initialized model explains nothing.
baseline = evaluate(model, Normalizer.identity(1, 1), test_split)
print(f"untrained test rel L2: {baseline['mean']:.4f}")


def report(epoch, train_loss, val_loss, horizon):
    if epoch % 5 == 0 or epoch == config.epochs - 1:
        print(f"  epoch {epoch:2d}: train loss {train_loss:.3f}, "
              f"val rel L2 {val_loss:.4f}")


# 3. Train. The loop standardizes the data, runs Adam with a cosine schedule,
#    and checkpoints the best-validation model into the run directory.
result = train(model, train_split, config, out_dir=work / "run", progress=report)
print(f"best val rel L2 {result.best_val:.4f} at epoch {result.best_epoch}; "
      f"checkpoint {result.best_path.name}")

# 4. Evaluate on the held-out split: physical-space relative L2 per sample.
metrics = evaluate(model, result.normalizer, test_split)
print(f"trained test rel L2: mean {metrics['mean']:.4f}, std {metrics['std']:.4f} "
      f"over {metrics['samples']} samples "
      f"({baseline['mean'] / metrics['mean']:.0f}x better than untrained)")

# 5. Dump one test sample as (x, truth, prediction) rows for plotting.
arrays = test_split[1]
pred = predict(model, result.normalizer, arrays["input"][:1], arrays["grid"])
save_profile_csv(work / "sample0.csv", arrays["grid"][:, 0],
                 arrays["target"][0, :, 0], pred[0, :, 0])
print(f"wrote {work / 'sample0.csv'} (columns: x, truth, prediction)")
