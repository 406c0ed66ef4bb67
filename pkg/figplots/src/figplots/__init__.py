"""Plot rendering for symcp experiment CSVs.

This package is a read-only consumer of two delimited formats:

* convergence traces with columns
  ``r,eta,iter,grad_norm,resid_norm,dist`` — rendered as one panel per
  metric and one row of panels per rank, log-scale y, one curve per
  stepsize;
* success grids with columns
  ``eta,r,alpha,trials,successes,ratio`` — rendered as one annotated
  table per stepsize with perturbation sizes as columns and ranks as
  rows.

It performs no numeric computation beyond reading values, and renders
deterministically: the same CSV always produces the same image bytes.
"""

from .schemas import ConvergenceTable, SchemaError, SuccessTable
from .plots import (
    plot_convergence,
    plot_success_grid,
    render_convergence,
    render_success_grid,
)

__all__ = [
    "ConvergenceTable",
    "SuccessTable",
    "SchemaError",
    "plot_convergence",
    "plot_success_grid",
    "render_convergence",
    "render_success_grid",
]

__version__ = "0.1.0"
