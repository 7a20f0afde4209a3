"""Raster -> RGB PNG, optionally with predicted trajectories on top."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402
from PIL.PngImagePlugin import PngInfo  # noqa: E402

from ..errors import IoError  # noqa: E402
from ..loss import MixtureOutput  # noqa: E402
from .core import Raster  # noqa: E402

TARGET_RGB = np.array([0, 200, 255], dtype=np.float64)
OTHERS_RGB = np.array([255, 140, 0], dtype=np.float64)
# one color per hypothesis; chosen away from the map palette
HYPOTHESIS_COLORS = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c"]


def compose_rgb(raster: Raster) -> np.ndarray:
    """Flatten the raster into an ``[H, W, 3]`` uint8 image.

    History masks fade in with time so the current step is brightest.
    """
    img = np.moveaxis(raster.data[0:3], 0, -1).astype(np.float64)
    steps = raster.history_steps
    for t in range(steps):
        w = 0.35 + 0.65 * (t + 1) / steps
        for mask, rgb in ((raster.others_channel(t), OTHERS_RGB), (raster.target_channel(t), TARGET_RGB)):
            on = mask > 0
            img[on] = w * rgb
    return img.round().astype(np.uint8)


def _figure_rgb(base: np.ndarray, raster: Raster, overlay: MixtureOutput) -> np.ndarray:
    h, w, _ = base.shape
    dpi = 100
    fig = plt.figure(figsize=(w / dpi, h / dpi), dpi=dpi)
    try:
        ax = fig.add_axes([0, 0, 1, 1])
        ax.imshow(base, interpolation="nearest")
        conf = overlay.confidences
        for k in range(overlay.k):
            px = raster.frame.local_to_pixel(overlay.means[k])
            ax.plot(
                px[:, 0],
                px[:, 1],
                color=HYPOTHESIS_COLORS[k % len(HYPOTHESIS_COLORS)],
                linewidth=1.2,
                antialiased=False,
                label=f"c{k + 1}={conf[k]:.2f}",
            )
        ax.set_xlim(-0.5, w - 0.5)
        ax.set_ylim(h - 0.5, -0.5)
        ax.axis("off")
        ax.legend(loc="upper right", fontsize=4, frameon=True, framealpha=0.6, handlelength=1.0, borderpad=0.3)
        fig.canvas.draw()
        rgba = np.asarray(fig.canvas.buffer_rgba())
        return rgba[..., :3].copy()
    finally:
        plt.close(fig)


def render_png(raster: Raster, overlay: Optional[MixtureOutput], path: str | Path, meta: Optional[dict] = None) -> None:
    """Write an 8-bit RGB PNG of ``raster``.

    ``overlay`` means are local-frame meters; lines leaving the image are
    clipped by the axes.
    """
    base = compose_rgb(raster)
    rgb = base if overlay is None else _figure_rgb(base, raster, overlay)
    info = PngInfo()
    info.add_text("bevmotion", json.dumps({"scene_id": raster.scene_id, "agent_id": raster.agent_id, **(meta or {})}))
    try:
        Image.fromarray(rgb, mode="RGB").save(path, format="PNG", pnginfo=info)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None
