"""Hyena neural operator toolkit.

A numpy/scipy implementation of a neural operator whose token mixer is a
gated stack of implicit long convolutions, plus the pieces needed to use it
end to end: a small reverse-mode autodiff engine, FFT-based causal
convolution, reference PDE solvers (1D diffusion-reaction, 2D incompressible
Navier-Stokes), dataset generation, a training harness, and a CLI.

Attribute access is lazy so that `hno.cli` can configure thread environment
variables before numpy is imported.
"""

__version__ = "0.1.0"

_LAZY_ATTRS = {
    # autodiff engine
    "Tensor": "tensor", "Tape": "tensor", "ShapeError": "tensor",
    "DtypeError": "tensor", "record_operation": "tensor", "zero_grads": "tensor",
    # fft helpers
    "rfft": "fft", "irfft": "fft", "next_pow2": "fft", "is_power_of_two": "fft",
    # convolution routes
    "direct_conv": "conv", "fft_conv": "conv", "short_conv": "conv",
    # implicit filters
    "HyenaFilterSpec": "filters", "HyenaFilterGenerator": "filters",
    "positional_encoding": "filters", "window": "filters",
    # network blocks
    "Dense": "blocks", "FeedForward": "blocks", "LayerNorm": "blocks",
    "CrossAttention": "blocks", "RandomFourierFeatures": "blocks",
    "HyenaOperator": "blocks", "HyenaBlock": "blocks",
    # full model + checkpoints
    "ModelConfig": "model", "HyenaNeuralOperator": "model", "preset": "model",
    "PRESETS": "model", "save_checkpoint": "model", "load_checkpoint": "model",
    "build_from_checkpoint": "model",
    # PDE solvers and initial conditions
    "DiffusionReactionConfig": "pde", "solve_diffusion_reaction": "pde",
    "sample_initial_condition_1d": "pde", "NavierStokesConfig": "pde",
    "solve_navier_stokes": "pde", "velocity_from_vorticity": "pde",
    "default_forcing": "pde", "GrfSpec": "pde", "sample_grf_2d": "pde",
    # datasets
    "write_container": "dataset", "read_container": "dataset",
    "generate_dataset": "dataset", "grid_1d": "dataset", "grid_2d": "dataset",
    "TEST_SEED_OFFSET": "dataset",
    # training
    "TrainConfig": "training", "TrainLog": "training", "TrainResult": "training",
    "Normalizer": "training", "train": "training", "evaluate": "training",
    "predict": "training", "relative_l2": "training", "AdamState": "training",
    "adam_step": "training", "cosine_lr": "training",
    "curriculum_horizon": "training", "DivergenceError": "training",
    # figures
    "save_field_ppm": "viz", "save_comparison_ppm": "viz",
    "save_profile_csv": "viz", "write_ppm": "viz", "field_to_rgb": "viz",
}

__all__ = ["__version__", *sorted(_LAZY_ATTRS)]


def __getattr__(name):
    module_name = _LAZY_ATTRS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_LAZY_ATTRS))
