"""Figure rendering for the report path: every delimited table written to a
file gets a companion figure unless suppressed."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.figsize"] = (6.0, 3.8)
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def render_column_figure(path, grid, values: np.ndarray, label: str):
    """Line plot (1D grids) or filled map (2D grids) of a scalar column."""
    fig, ax = plt.subplots()
    if grid.is_1d or values.ndim == 1:
        ax.plot(grid.x, values.reshape(grid.nx), lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel(label)
    else:
        im = ax.pcolormesh(grid.x, grid.y, values.T, shading="auto",
                           cmap="RdBu_r")
        fig.colorbar(im, ax=ax, label=label)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_aspect("equal")
    ax.set_title(label)
    fig.savefig(path, bbox_inches="tight", dpi=150)
    plt.close(fig)
    return path


def render_residual_bars(path, names, measured, tolerances):
    """Bar chart of measured residuals against their tolerances (log scale)."""
    fig, ax = plt.subplots()
    idx = np.arange(len(names))
    ax.bar(idx - 0.2, measured, width=0.4, label="measured")
    ax.bar(idx + 0.2, tolerances, width=0.4, label="tolerance", alpha=0.6)
    ax.set_yscale("log")
    ax.set_xticks(idx)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.legend()
    fig.savefig(path, bbox_inches="tight", dpi=150)
    plt.close(fig)
    return path
