"""The full neural operator: input encoder, latent propagation, random-Fourier
query projection, cross-attention decoder, and output head.

Geometry convention: every field is flattened to a token sequence of length
`seq_len` (1D: the grid itself; 2D: row-major H*W). The encoder lifts
field+coordinate channels, runs a stack of Hyena blocks whose outputs are
aggregated by summation, projects to the latent width, runs a second aggregated
stack, and hands the latent sequence to the decoder. The decoder builds queries
from random Fourier features of the coordinates, attends into the latent
sequence, refines with Hyena blocks and a feed-forward stage (each residual),
and marches the result through propagator MLPs before the readout head.

Checkpoints are single files: magic "HNOC", a JSON manifest (config, seed,
parameter names/shapes, auxiliary array names/shapes), then raw float32
little-endian buffers in manifest order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .blocks import CrossAttention, Dense, FeedForward, HyenaBlock, RandomFourierFeatures
from .tensor import Tensor

__all__ = [
    "ModelConfig",
    "HyenaNeuralOperator",
    "diffusion_reaction_1d",
    "navier_stokes_2d",
    "navier_stokes_2d_desk",
    "tiny_1d",
    "PRESETS",
    "preset",
    "save_checkpoint",
    "load_checkpoint",
    "build_from_checkpoint",
    "CHECKPOINT_MAGIC",
]


@dataclass
class ModelConfig:
    problem: str                      # "diffusion_reaction_1d" | "navier_stokes_2d"
    seq_len: int                      # tokens per sample (1D: nx; 2D: n*n)
    input_channels: int               # field channels (grid channels excluded)
    grid_channels: int
    embed_widths: list[int]           # encoder top lift, e.g. [2, 128]
    encoder_blocks: int
    encoder_ffn: list[int]
    bottom_widths: list[int]          # projection between the two encoder stacks
    latent_blocks: int
    latent_ffn: list[int]
    query_top_widths: list[int]       # [grid_channels, rff width, query width]
    cross_attn_width: int
    cross_attn_heads: int
    ca_ffn_widths: list[int]
    decoder_blocks: int
    decoder_ffn: list[int]
    query_bottom_widths: list[int] | None  # optional lift before the propagator
    propagator_widths: list[int]
    propagator_unshared: int          # >1: that many unshared MLPs, one pass each;
                                      # 1: one shared MLP applied once per horizon step
    head_widths: list[int]
    output_channels: int = 1
    t_out: int = 1
    hyena_order: int = 2
    pos_frequencies: int = 8
    filter_hidden_factor: int = 2     # filter-FFN hidden width = factor * block width
    dropout: float = 0.03
    rff_sigma: float = 1.0
    short_width: int = 3

    def filter_hidden(self, width: int) -> list[int]:
        return [self.filter_hidden_factor * width, self.filter_hidden_factor * width]

    def validate(self) -> None:
        if self.embed_widths[0] != self.input_channels + self.grid_channels:
            raise ValueError(
                f"embed input width {self.embed_widths[0]} != field+grid channels "
                f"{self.input_channels + self.grid_channels}")
        if self.query_top_widths[0] != self.grid_channels:
            raise ValueError("query top must start at grid_channels")
        if self.query_top_widths[-1] != self.cross_attn_width:
            raise ValueError("query top must end at the cross-attention width")
        if self.cross_attn_width % self.cross_attn_heads != 0:
            raise ValueError(
                f"heads {self.cross_attn_heads} must divide width {self.cross_attn_width}")
        if self.t_out < 1 or self.propagator_unshared < 1:
            raise ValueError("t_out and propagator_unshared must be >= 1")


def diffusion_reaction_1d(seq_len: int = 256) -> ModelConfig:
    return ModelConfig(
        problem="diffusion_reaction_1d", seq_len=seq_len,
        input_channels=1, grid_channels=1,
        embed_widths=[2, 128], encoder_blocks=8, encoder_ffn=[128, 256, 128],
        bottom_widths=[128, 128], latent_blocks=8, latent_ffn=[128, 256, 128],
        query_top_widths=[1, 128, 128], cross_attn_width=128, cross_attn_heads=8,
        ca_ffn_widths=[128, 256, 128], decoder_blocks=3, decoder_ffn=[128, 256, 128],
        query_bottom_widths=None, propagator_widths=[128, 128, 128],
        propagator_unshared=3, head_widths=[128, 64, 1], output_channels=1, t_out=1)


def navier_stokes_2d(n: int = 32, t_out: int = 10, input_steps: int = 10) -> ModelConfig:
    return ModelConfig(
        problem="navier_stokes_2d", seq_len=n * n,
        input_channels=input_steps, grid_channels=2,
        embed_widths=[input_steps + 2, 96], encoder_blocks=8, encoder_ffn=[96, 192, 96],
        bottom_widths=[96, 192], latent_blocks=8, latent_ffn=[192, 384, 192],
        query_top_widths=[2, 192, 192], cross_attn_width=192, cross_attn_heads=4,
        ca_ffn_widths=[192, 384, 192], decoder_blocks=3, decoder_ffn=[192, 384, 192],
        query_bottom_widths=[192, 384], propagator_widths=[384, 384, 384],
        propagator_unshared=1, head_widths=[384, 192, 96, 1],
        output_channels=1, t_out=t_out)


def navier_stokes_2d_desk(n: int = 32, t_out: int = 10, input_steps: int = 10) -> ModelConfig:
    """Reduced 2D model for single-core runs; same wiring as the full preset."""
    return ModelConfig(
        problem="navier_stokes_2d", seq_len=n * n,
        input_channels=input_steps, grid_channels=2,
        embed_widths=[input_steps + 2, 32], encoder_blocks=3, encoder_ffn=[32, 64, 32],
        bottom_widths=[32, 64], latent_blocks=3, latent_ffn=[64, 128, 64],
        query_top_widths=[2, 64, 64], cross_attn_width=64, cross_attn_heads=4,
        ca_ffn_widths=[64, 128, 64], decoder_blocks=2, decoder_ffn=[64, 128, 64],
        query_bottom_widths=[64, 128], propagator_widths=[128, 128, 128],
        propagator_unshared=1, head_widths=[128, 64, 32, 1],
        output_channels=1, t_out=t_out)


def tiny_1d(seq_len: int = 32) -> ModelConfig:
    """Small 1D configuration for fast tests and overfit checks."""
    return ModelConfig(
        problem="diffusion_reaction_1d", seq_len=seq_len,
        input_channels=1, grid_channels=1,
        embed_widths=[2, 16], encoder_blocks=1, encoder_ffn=[16, 32, 16],
        bottom_widths=[16, 16], latent_blocks=1, latent_ffn=[16, 32, 16],
        query_top_widths=[1, 16, 16], cross_attn_width=16, cross_attn_heads=2,
        ca_ffn_widths=[16, 32, 16], decoder_blocks=1, decoder_ffn=[16, 32, 16],
        query_bottom_widths=None, propagator_widths=[16, 16, 16],
        propagator_unshared=1, head_widths=[16, 8, 1], output_channels=1, t_out=1,
        pos_frequencies=4, filter_hidden_factor=2)


PRESETS = {
    "diffusion_reaction_1d": diffusion_reaction_1d,
    "navier_stokes_2d": navier_stokes_2d,
    "navier_stokes_2d_desk": navier_stokes_2d_desk,
    "tiny_1d": tiny_1d,
}


def preset(name: str, **kwargs) -> ModelConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset '{name}'; available: {sorted(PRESETS)}")
    return PRESETS[name](**kwargs)


class HyenaNeuralOperator:
    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(self.seed)
        c = config

        def block(width, ffn):
            return HyenaBlock(width, c.hyena_order, c.seq_len, ffn, rng,
                              frequencies=c.pos_frequencies,
                              filter_hidden=c.filter_hidden(width),
                              dropout_rate=c.dropout, short_width=c.short_width,
                              dtype=dtype)

        self.embed = Dense(c.embed_widths[0], c.embed_widths[1], rng, dtype)
        self.encoder_stack = [block(c.embed_widths[1], c.encoder_ffn)
                              for _ in range(c.encoder_blocks)]
        self.bottom = Dense(c.bottom_widths[0], c.bottom_widths[1], rng, dtype)
        self.latent_stack = [block(c.bottom_widths[1], c.latent_ffn)
                             for _ in range(c.latent_blocks)]
        self.rff = RandomFourierFeatures(c.grid_channels, c.query_top_widths[1] // 2,
                                         c.rff_sigma, rng, dtype)
        self.query_top = Dense(c.query_top_widths[1], c.query_top_widths[2], rng, dtype)
        self.cross_attn = CrossAttention(c.cross_attn_width, c.cross_attn_heads, rng, dtype)
        self.decoder_stack = [block(c.cross_attn_width, c.decoder_ffn)
                              for _ in range(c.decoder_blocks)]
        self.ca_ffn = FeedForward(c.ca_ffn_widths, rng, dropout_rate=c.dropout, dtype=dtype)
        self.query_bottom = (Dense(c.query_bottom_widths[0], c.query_bottom_widths[1],
                                   rng, dtype)
                             if c.query_bottom_widths else None)
        prop_count = c.propagator_unshared
        self.propagators = [FeedForward(c.propagator_widths, rng,
                                        dropout_rate=c.dropout, dtype=dtype)
                            for _ in range(prop_count)]
        self.head = FeedForward(c.head_widths, rng, dropout_rate=0.0, dtype=dtype)

    # -- parameters ----------------------------------------------------------
    def parameters(self) -> list[tuple[str, Tensor]]:
        out = [(f"embed.{n}", p) for n, p in self.embed.parameters()]
        for i, blk in enumerate(self.encoder_stack):
            out.extend((f"encoder{i}.{n}", p) for n, p in blk.parameters())
        out.extend((f"bottom.{n}", p) for n, p in self.bottom.parameters())
        for i, blk in enumerate(self.latent_stack):
            out.extend((f"latent{i}.{n}", p) for n, p in blk.parameters())
        out.extend((f"query_top.{n}", p) for n, p in self.query_top.parameters())
        out.extend((f"cross_attn.{n}", p) for n, p in self.cross_attn.parameters())
        for i, blk in enumerate(self.decoder_stack):
            out.extend((f"decoder{i}.{n}", p) for n, p in blk.parameters())
        out.extend((f"ca_ffn.{n}", p) for n, p in self.ca_ffn.parameters())
        if self.query_bottom is not None:
            out.extend((f"query_bottom.{n}", p) for n, p in self.query_bottom.parameters())
        for i, prop in enumerate(self.propagators):
            out.extend((f"propagator{i}.{n}", p) for n, p in prop.parameters())
        out.extend((f"head.{n}", p) for n, p in self.head.parameters())
        return out

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.parameters())

    # -- forward -------------------------------------------------------------
    def _check_inputs(self, fields: np.ndarray, grid: np.ndarray) -> tuple:
        c = self.config
        fields = np.asarray(fields, dtype=self.dtype)
        grid = np.asarray(grid, dtype=self.dtype)
        if fields.ndim != 3 or fields.shape[2] != c.input_channels:
            raise ValueError(
                f"expected fields of shape (B, L, {c.input_channels}), got {fields.shape}")
        if grid.ndim != 2 or grid.shape[1] != c.grid_channels:
            raise ValueError(
                f"expected grid of shape (L, {c.grid_channels}), got {grid.shape}")
        if fields.shape[1] != grid.shape[0]:
            raise ValueError(
                f"fields length {fields.shape[1]} != grid length {grid.shape[0]}")
        return fields, grid

    def encode(self, fields, grid, training: bool = False, rng=None) -> Tensor:
        """fields (B, L, C) + grid (L, gc) -> latent sequence (B, L, latent width)."""
        fields, grid = self._check_inputs(fields, grid)
        b = fields.shape[0]
        gtile = np.broadcast_to(grid[None], (b, *grid.shape))
        x = Tensor(np.concatenate([fields, gtile], axis=2))
        z = self.embed(x)
        agg = None
        for blk in self.encoder_stack:
            z = blk(z, training=training, rng=rng)
            agg = z if agg is None else T.add(agg, z)
        z = self.bottom(agg)
        agg = None
        for blk in self.latent_stack:
            z = blk(z, training=training, rng=rng)
            agg = z if agg is None else T.add(agg, z)
        return agg

    def decode(self, coords: np.ndarray, u_latent: Tensor, horizon: int | None = None,
               training: bool = False, rng=None) -> Tensor:
        """Query coordinates (L_out, gc) + latent sequence -> (B, L_out, channels*T)."""
        c = self.config
        horizon = c.t_out if horizon is None else int(horizon)
        if not 1 <= horizon <= c.t_out:
            raise ValueError(f"horizon {horizon} out of range [1, {c.t_out}]")
        feats = self.rff(coords)
        p0 = T.gelu(self.query_top(Tensor(feats[None])))
        attended = self.cross_attn(p0, u_latent)
        p_attn = T.add(p0, attended)
        z = p_attn
        for blk in self.decoder_stack:
            z = blk(z, training=training, rng=rng)
        p_mix = T.add(p_attn, z)
        p_out = T.add(p_mix, self.ca_ffn(p_mix, training=training, rng=rng))
        if self.query_bottom is not None:
            p_out = self.query_bottom(p_out)
        if c.propagator_unshared > 1:
            s = p_out
            for prop in self.propagators:
                s = T.add(s, prop(s, training=training, rng=rng))
            return self.head(s, training=training, rng=rng)
        s, frames = p_out, []
        for _ in range(horizon):
            s = T.add(s, self.propagators[0](s, training=training, rng=rng))
            frames.append(self.head(s, training=training, rng=rng))
        return frames[0] if horizon == 1 else T.concat(frames, axis=2)

    def forward(self, fields, grid, horizon: int | None = None,
                training: bool = False, rng=None) -> Tensor:
        u_latent = self.encode(fields, grid, training=training, rng=rng)
        return self.decode(np.asarray(grid), u_latent, horizon=horizon,
                           training=training, rng=rng)

    __call__ = forward

    def at_resolution(self, seq_len: int) -> "HyenaNeuralOperator":
        """Rebuild this model for a new sequence length, reusing the parameters."""
        cfg = ModelConfig(**{**asdict(self.config), "seq_len": seq_len})
        other = HyenaNeuralOperator(cfg, seed=self.seed, dtype=self.dtype)
        for (_, src), (_, dst) in zip(self.parameters(), other.parameters()):
            dst.data = src.data
        return other


# ---------------------------------------------------------------------------
# Checkpoint format
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"HNOC"
CHECKPOINT_VERSION = 1


def _manifest_bytes(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, model: HyenaNeuralOperator, extras: dict | None = None,
                    state: dict | None = None) -> None:
    """Write model (+ named auxiliary arrays + JSON-serializable state) to one file.

    `extras` maps names to float arrays (optimizer moments, normalizer stats, ...)
    stored as float32 after the parameters, in sorted name order.
    """
    extras = extras or {}
    params = model.parameters()
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "seed": model.seed,
        "parameter_count": model.parameter_count(),
        "params": [{"name": n, "shape": list(p.shape)} for n, p in params],
        "extras": [{"name": n, "shape": list(np.asarray(extras[n]).shape)}
                   for n in sorted(extras)],
        "state": state or {},
    }
    blob = _manifest_bytes(manifest)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for _, p in params:
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        for n in sorted(extras):
            f.write(np.ascontiguousarray(extras[n], dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict, dict, dict]:
    """Read a checkpoint -> (manifest, {param name: array}, {extra name: array})."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        version, man_len = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        manifest = json.loads(f.read(man_len).decode("utf-8"))
        params, extras = {}, {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            params[entry["name"]] = buf.copy()
        for entry in manifest["extras"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            extras[entry["name"]] = buf.copy()
    return manifest, params, extras


def build_from_checkpoint(path, seq_len: int | None = None
                          ) -> tuple[HyenaNeuralOperator, dict, dict]:
    """Reconstruct the model from a checkpoint; optionally at a new resolution."""
    manifest, params, extras = load_checkpoint(path)
    cfg_dict = dict(manifest["model_config"])
    if seq_len is not None:
        cfg_dict["seq_len"] = seq_len
    model = HyenaNeuralOperator(ModelConfig(**cfg_dict), seed=manifest["seed"])
    for name, p in model.parameters():
        stored = params.get(name)
        if stored is None or tuple(stored.shape) != p.shape:
            raise ValueError(f"checkpoint parameter mismatch for '{name}'")
        p.data = np.ascontiguousarray(stored, dtype=p.dtype)
    return model, manifest, extras
