"""
Visualization module for the CASO lab.

Modules
-------
plots
    Publication theme, loss curves, interpolation and Jensen-sweep figures,
    and image grids written as graymaps

Usage
-----
    from src.visualization import plot_loss_curves, save_figure

    fig = plot_loss_curves(history, "epoch", ["loss"], title="denoiser")
    save_figure(fig, out / "loss.png")
"""

from src.visualization.plots import (
    MAIN_COLORS,
    make_grid,
    plot_interpolation,
    plot_jensen_sweep,
    plot_loss_curves,
    save_figure,
    set_publication_theme,
)

__all__ = [
    "MAIN_COLORS",
    "make_grid",
    "plot_interpolation",
    "plot_jensen_sweep",
    "plot_loss_curves",
    "save_figure",
    "set_publication_theme",
]
