"""Plain-file visualization: binary PPM (P6) images for 2D fields and CSV
profiles for 1D solutions. No plotting libraries are needed to inspect runs;
PPM opens in any image viewer and the CSV loads anywhere.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = [
    "field_to_rgb",
    "write_ppm",
    "save_field_ppm",
    "save_comparison_ppm",
    "save_profile_csv",
]

# Diverging blue-white-red anchors for signed fields.
_NEG = np.array([33, 102, 172], dtype=np.float64)
_MID = np.array([255, 255, 255], dtype=np.float64)
_POS = np.array([178, 24, 43], dtype=np.float64)


def field_to_rgb(field: np.ndarray, vmax: float | None = None,
                 mode: str = "diverging") -> np.ndarray:
    """Map an (h, w) field to (h, w, 3) uint8.

    "diverging": symmetric about zero, blue negative / white zero / red positive.
    "magnitude": white zero to red at vmax, for error maps.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError(f"expected a 2D field, got shape {field.shape}")
    if vmax is None:
        vmax = float(np.abs(field).max()) or 1.0
    if vmax <= 0:
        raise ValueError(f"vmax must be positive, got {vmax}")
    if mode == "diverging":
        x = np.clip(field / vmax, -1.0, 1.0)
        t = np.abs(x)[..., None]
        ends = np.where(x[..., None] < 0, _NEG, _POS)
        rgb = _MID * (1.0 - t) + ends * t
    elif mode == "magnitude":
        t = np.clip(field / vmax, 0.0, 1.0)[..., None]
        rgb = _MID * (1.0 - t) + _POS * t
    else:
        raise ValueError(f"unknown colormap mode '{mode}'")
    return np.round(rgb).astype(np.uint8)


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8, got {rgb.shape} {rgb.dtype}")
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def _upscale(rgb: np.ndarray, scale: int) -> np.ndarray:
    if scale <= 1:
        return rgb
    return np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)


def save_field_ppm(path, field: np.ndarray, vmax: float | None = None,
                   scale: int = 8) -> None:
    write_ppm(path, _upscale(field_to_rgb(field, vmax), scale))


def save_comparison_ppm(path, truth: np.ndarray, prediction: np.ndarray,
                        scale: int = 8, gap: int = 2) -> None:
    """Side-by-side truth | prediction | absolute error, shared signed scale
    for the first two panels, magnitude scale for the error panel."""
    truth = np.asarray(truth, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if truth.shape != prediction.shape or truth.ndim != 2:
        raise ValueError(f"truth {truth.shape} and prediction {prediction.shape} "
                         "must be matching 2D fields")
    vmax = float(max(np.abs(truth).max(), np.abs(prediction).max())) or 1.0
    err = np.abs(prediction - truth)
    panels = [
        field_to_rgb(truth, vmax),
        field_to_rgb(prediction, vmax),
        field_to_rgb(err, float(err.max()) or 1.0, mode="magnitude"),
    ]
    gutter = np.full((truth.shape[0], gap, 3), 255, dtype=np.uint8)
    row = []
    for i, panel in enumerate(panels):
        if i:
            row.append(gutter)
        row.append(panel)
    write_ppm(path, _upscale(np.concatenate(row, axis=1), scale))


def save_profile_csv(path, x: np.ndarray, truth: np.ndarray,
                     prediction: np.ndarray) -> None:
    x = np.asarray(x).ravel()
    truth = np.asarray(truth).ravel()
    prediction = np.asarray(prediction).ravel()
    if not (x.size == truth.size == prediction.size):
        raise ValueError(f"column lengths differ: x {x.size}, truth {truth.size}, "
                         f"prediction {prediction.size}")
    lines = ["x,truth,prediction"]
    for i in range(x.size):
        lines.append(f"{x[i]:.8e},{truth[i]:.8e},{prediction[i]:.8e}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
