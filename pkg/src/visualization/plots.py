"""
Publication-quality figures for training curves and edit diagnostics
=====================================================================

Colorblind-friendly palette and a single rcParams theme shared by every
figure the CLI writes. All functions take plain numpy / pandas inputs and
return the matplotlib Figure; `save_figure` writes PNG at 200 dpi.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

MAIN_COLORS = [
    '#0173B2',  # Blue
    '#DE8F05',  # Orange
    '#029E73',  # Green
    '#CC78BC',  # Purple
    '#ECE133',  # Yellow
    '#56B4E9',  # Light blue
    '#D55E00',  # Dark orange
]


def set_publication_theme():
    """Reset rcParams to the lab's figure style."""
    plt.rcdefaults()
    plt.rcParams.update({
        "font.size": 9,
        "axes.grid": True,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "axes.prop_cycle": matplotlib.cycler(color=MAIN_COLORS),
        "grid.alpha": 0.3,
        "savefig.dpi": 200,
        "savefig.bbox": "tight",
    })


def save_figure(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"Saved figure {path}")
    return path


def plot_loss_curves(history: pd.DataFrame, x: str, columns: Sequence[str], title: str = "", log_y: bool = True):
    """One line per loss column against `x` (epoch or iteration)."""
    set_publication_theme()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for col in columns:
        ax.plot(history[x], history[col], label=col.replace("_", " "))
    if log_y and len(history) and (history[list(columns)].to_numpy() > 0).all():
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel("loss")
    if title:
        ax.set_title(title)
    ax.legend()
    return fig


def plot_interpolation(summary: pd.DataFrame, title: str = ""):
    """Mean target logit (with +-1 std band) against guidance scale."""
    set_publication_theme()
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(summary["scale"], summary["mean_target_logit"], marker="o")
    if "std_target_logit" in summary:
        lo = summary["mean_target_logit"] - summary["std_target_logit"]
        hi = summary["mean_target_logit"] + summary["std_target_logit"]
        ax.fill_between(summary["scale"], lo, hi, alpha=0.2)
    ax.axvline(0.0, color="#333333", linewidth=0.8, linestyle="--")
    ax.set_xlabel("guidance scale")
    ax.set_ylabel("target-class logit")
    if title:
        ax.set_title(title)
    return fig


def plot_jensen_sweep(sweep: pd.DataFrame, title: str = ""):
    """Q_mc against noise level, and the assembled bound per sigma2."""
    set_publication_theme()
    fig, (ax_q, ax_b) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    by_level = sweep.drop_duplicates("L").sort_values("L")
    ax_q.plot(by_level["L"], by_level["Q_mc"], marker="o")
    ax_q.set_xlabel("noise level L")
    ax_q.set_ylabel("mean ||z0 - z0_hat||")
    for sigma2, part in sweep.groupby("sigma2"):
        part = part.sort_values("L")
        ax_b.plot(part["L"], part["bound"], marker="o", label=f"sigma2={sigma2:g}")
    ax_b.set_xlabel("noise level L")
    ax_b.set_ylabel("bound")
    ax_b.legend()
    if title:
        fig.suptitle(title)
    return fig


def make_grid(rows: Sequence[np.ndarray], pad: int = 1, fill: float = 1.0, max_cols: Optional[int] = None) -> np.ndarray:
    """Tile image rows (each (n, h, w)) into one 2-D array separated by `pad` pixels."""
    rows = [np.asarray(r, dtype=np.float64) for r in rows]
    n = max(len(r) for r in rows)
    if max_cols is not None:
        n = min(n, max_cols)
    h, w = rows[0].shape[1:]
    grid = np.full((len(rows) * (h + pad) + pad, n * (w + pad) + pad), fill)
    for i, row in enumerate(rows):
        for j, image in enumerate(row[:n]):
            top, left = pad + i * (h + pad), pad + j * (w + pad)
            grid[top:top + h, left:left + w] = image
    return grid
