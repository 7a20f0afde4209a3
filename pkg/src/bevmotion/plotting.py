"""Figures written next to the CLI's tabular outputs."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import IoError  # noqa: E402
from .metrics import REPORT_COLUMNS, MetricsReport  # noqa: E402

# fixed metadata keeps PNG bytes identical across runs
_PNG_META = {"Software": None}


def _save(fig, path: str | Path) -> None:
    try:
        fig.savefig(path, dpi=100, metadata=_PNG_META)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None
    finally:
        plt.close(fig)


def plot_report(report: MetricsReport, path: str | Path) -> None:
    """One panel per metric, one bar per row (Vehicle / Pedestrian / Cyclist / Avg)."""
    names = list(report.rows)
    fig, axes = plt.subplots(1, len(REPORT_COLUMNS), figsize=(3 * len(REPORT_COLUMNS), 3))
    for ax, col in zip(axes, REPORT_COLUMNS):
        vals = [report.rows[n][col] for n in names]
        shown = [0.0 if v is None or math.isnan(v) else v for v in vals]
        bars = ax.bar(range(len(names)), shown, color=["#4c72b0", "#dd8452", "#55a868", "#808080"][: len(names)])
        for b, v in zip(bars, vals):
            if v is None or math.isnan(v):
                b.set_hatch("//")
                b.set_alpha(0.3)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, fontsize=8)
        ax.set_title(col, fontsize=9)
        if col in ("mAP", "miss_rate", "overlap_rate"):
            ax.set_ylim(0, 1)
    fig.tight_layout()
    _save(fig, path)


def plot_training_log(rows: Sequence[dict], path: str | Path) -> None:
    """Training loss per iteration (log scale) with validation points and the learning rate."""
    it = np.array([r["iter"] for r in rows])
    train = np.array([r["train_loss"] for r in rows], dtype=float)
    val = [(r["iter"], r["val_loss"]) for r in rows if r.get("val_loss") is not None]
    lr = np.array([r["lr"] for r in rows], dtype=float)

    fig, (ax, ax_lr) = plt.subplots(2, 1, figsize=(6, 5), sharex=True, gridspec_kw={"height_ratios": [3, 1]})
    ax.plot(it, np.maximum(train, 1e-3), lw=0.6, color="#4c72b0", label="train")
    if val:
        vi, vl = zip(*val)
        ax.plot(vi, np.maximum(vl, 1e-3), "o-", ms=3, color="#dd8452", label="validation")
    ax.set_yscale("log")
    ax.set_ylabel("mixture NLL")
    ax.legend(fontsize=8)
    ax_lr.plot(it, lr, color="#555555", lw=0.8)
    ax_lr.ticklabel_format(axis="y", useOffset=False)
    ax_lr.set_ylabel("lr")
    ax_lr.set_xlabel("iteration")
    fig.tight_layout()
    _save(fig, path)
