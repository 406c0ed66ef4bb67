"""Figure rendering for the two CSV schemas.

Rendering is a pure function of the parsed table: axis layout, curve
order, labels and colors are all derived from the sorted column values,
and files are written without timestamps so re-running on the same
input produces identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg", force=False)

import matplotlib.pyplot as plt
import numpy as np

from .schemas import (
    METRIC_COLUMNS,
    METRIC_LABELS,
    ConvergenceTable,
    SuccessTable,
    load_convergence,
    load_success,
)

__all__ = ["render_convergence", "render_success_grid",
           "plot_convergence", "plot_success_grid", "save_figure"]

_PNG_METADATA = {"Software": "figplots"}


def _fmt(value) -> str:
    """Compact label text for a numeric column value."""
    if float(value) == int(value):
        return str(int(value))
    return f"{float(value):g}"


def render_convergence(table: ConvergenceTable):
    """One row of panels per rank, one panel per metric, log-scale y.

    Each panel holds one curve per stepsize, labelled with the eta
    column value.
    """
    n_rows = len(table.r_values)
    n_cols = len(METRIC_COLUMNS)
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(4.2 * n_cols, 3.2 * n_rows),
        squeeze=False, constrained_layout=True)
    for i, r in enumerate(table.r_values):
        for j, metric in enumerate(METRIC_COLUMNS):
            ax = axes[i][j]
            for eta in table.eta_values:
                if (r, eta) not in table.curves:
                    continue
                bucket = table.curves[(r, eta)]
                ax.plot(bucket["iter"], bucket[metric],
                        label=f"eta={_fmt(eta)}")
            ax.set_yscale("log")
            ax.set_xlabel("iteration")
            ax.set_ylabel(METRIC_LABELS[metric])
            ax.set_title(f"r={_fmt(r)}, {METRIC_LABELS[metric]}")
            ax.legend(loc="upper right")
    return fig


def render_success_grid(table: SuccessTable):
    """One annotated table per stepsize: ranks as rows, sizes as columns."""
    n_tables = len(table.eta_values)
    n_rows = len(table.r_values)
    n_cols = len(table.alpha_values)
    fig, axes = plt.subplots(
        n_tables, 1, figsize=(1.3 * n_cols + 2.0, 0.7 * n_rows + 1.3),
        squeeze=False, constrained_layout=True)
    for i, eta in enumerate(table.eta_values):
        ax = axes[i][0]
        grid = table.ratios[i]
        ax.imshow(grid, cmap="RdYlGn", vmin=0.0, vmax=1.0, aspect="auto")
        for row in range(n_rows):
            for col in range(n_cols):
                ax.text(col, row, f"{100.0 * grid[row, col]:.0f}%",
                        ha="center", va="center", fontsize=9)
        ax.set_xticks(range(n_cols),
                      [_fmt(a) for a in table.alpha_values])
        ax.set_yticks(range(n_rows), [_fmt(r) for r in table.r_values])
        ax.set_xlabel("perturbation size")
        ax.set_ylabel("rank")
        ax.set_title(f"success ratio, eta={_fmt(eta)}")
    return fig


def save_figure(fig, out_path) -> None:
    """Write the figure without timestamps so output bytes are stable."""
    out = str(out_path)
    if out.endswith(".svg"):
        with plt.rc_context({"svg.hashsalt": "figplots"}):
            fig.savefig(out, metadata={"Date": None})
    else:
        fig.savefig(out, metadata=dict(_PNG_METADATA))
    plt.close(fig)


def plot_convergence(csv_path, out_path) -> None:
    """Validate, render and write a convergence-trace figure."""
    save_figure(render_convergence(load_convergence(csv_path)), out_path)


def plot_success_grid(csv_path, out_path) -> None:
    """Validate, render and write a success-grid figure."""
    save_figure(render_success_grid(load_success(csv_path)), out_path)
