"""Deterministic false-color image export for rasters, costmaps, and
criticality histograms."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .costmaps import Costmap
from .io import save_plane_pgm, save_raster_pgm
from .sensing import ObservationRaster

# fixed semantic palette (RGB)
CLASS_COLORS = np.array(
    [
        [235, 235, 235],  # empty
        [40, 40, 48],     # occupied
        [140, 110, 180],  # shadow
        [190, 210, 230],  # outOfRange
    ],
    dtype=np.uint8,
)


def raster_to_rgb(raster: ObservationRaster) -> np.ndarray:
    return CLASS_COLORS[raster.cells]


def sdf_to_rgb(plane: np.ndarray, cap: float) -> np.ndarray:
    """Diverging palette centered at zero: red inside obstacles, blue free."""
    v = np.clip(np.asarray(plane, dtype=float) / cap, -1.0, 1.0)
    rgb = np.empty(plane.shape + (3,), dtype=np.uint8)
    neg = v < 0
    mag_n = (-v).clip(0, 1)
    mag_p = v.clip(0, 1)
    rgb[..., 0] = np.where(neg, 255, (255 * (1 - mag_p) * 0.85 + 30 * mag_p)).astype(np.uint8)
    rgb[..., 1] = (215 * (1 - np.abs(v))).astype(np.uint8)
    rgb[..., 2] = np.where(neg, (215 * (1 - mag_n)).astype(np.uint8),
                           (255 * (0.85 + 0.15 * mag_p)).astype(np.uint8))
    return rgb


def render_raster(raster: ObservationRaster, out_path: str | Path) -> Path:
    """PNG false-color plus a sibling raw PGM; byte-deterministic."""
    out_path = Path(out_path)
    Image.fromarray(raster_to_rgb(raster)[::-1], mode="RGB").save(out_path, format="PNG")
    save_raster_pgm(raster, out_path.with_suffix(".pgm"))
    return out_path


def render_costmap_plane(cost: Costmap, step: int, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    plane = cost.planes[step]
    Image.fromarray(sdf_to_rgb(plane, cost.cap)[::-1], mode="RGB").save(out_path, format="PNG")
    quantized = np.clip(
        (plane + cost.cap) / (2 * cost.cap) * 255.0, 0, 255
    ).astype(np.uint8)
    save_plane_pgm(quantized, out_path.with_suffix(".pgm"))
    return out_path


def render_histogram(histogram: np.ndarray, out_path: str | Path, title: str = "") -> Path:
    """Log-scale bar chart of scenario counts per colliding-candidate count."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_path = Path(out_path)
    xs = np.arange(len(histogram))
    fig, ax = plt.subplots(figsize=(8, 3.2), dpi=100)
    ax.bar(xs, np.maximum(histogram, 0), width=0.9, color="#3a5fa0")
    ax.set_yscale("log")
    ax.set_ylim(bottom=0.5)
    ax.set_xlabel("colliding candidates")
    ax.set_ylabel("scenarios")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, metadata={"Software": None})
    plt.close(fig)
    return out_path


def save_histogram_csv(histogram: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("colliding_count,scenarios\n")
        for count, n in enumerate(histogram):
            fh.write(f"{count},{int(n)}\n")
