"""Validated loaders for the two experiment CSV schemas."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["SchemaError", "ConvergenceTable", "SuccessTable",
           "load_convergence", "load_success"]

CONVERGENCE_COLUMNS = ("r", "eta", "iter", "grad_norm", "resid_norm", "dist")
SUCCESS_COLUMNS = ("eta", "r", "alpha", "trials", "successes", "ratio")

METRIC_COLUMNS = ("grad_norm", "resid_norm", "dist")
METRIC_LABELS = {
    "grad_norm": "gradient norm",
    "resid_norm": "residual norm",
    "dist": "distance to truth",
}


class SchemaError(ValueError):
    """The CSV does not conform to the documented schema."""


def _read_rows(path, required: tuple[str, ...]) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected a header row")
        for column in required:
            if column not in reader.fieldnames:
                raise SchemaError(f"{path}: missing column {column!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows after the header")
    return rows


def _parse(path, row_no: int, raw: str | None, kind, column: str):
    if raw is None or raw == "":
        raise SchemaError(f"{path}: row {row_no} is missing column "
                          f"{column!r}")
    try:
        return kind(raw)
    except ValueError:
        raise SchemaError(
            f"{path}: row {row_no} column {column!r} has non-numeric value "
            f"{raw!r}") from None


@dataclass(frozen=True)
class ConvergenceTable:
    """Per-iteration metric traces grouped by (rank, stepsize)."""

    r_values: tuple[int, ...]
    eta_values: tuple[float, ...]
    # curves[(r, eta)][metric] -> array indexed by row order of the CSV
    curves: dict

    def trace(self, r: int, eta: float, metric: str) -> np.ndarray:
        return self.curves[(r, eta)][metric]


@dataclass(frozen=True)
class SuccessTable:
    """Success ratios on the (stepsize, rank, perturbation-size) grid."""

    eta_values: tuple[float, ...]
    r_values: tuple[int, ...]
    alpha_values: tuple[float, ...]
    ratios: np.ndarray  # shape (len(eta), len(r), len(alpha))
    trials: np.ndarray  # same shape, per-cell trial counts


def load_convergence(path) -> ConvergenceTable:
    """Parse and validate a convergence-trace CSV."""
    rows = _read_rows(path, CONVERGENCE_COLUMNS)
    curves: dict = {}
    for row_no, row in enumerate(rows, start=2):
        r = _parse(path, row_no, row["r"], int, "r")
        eta = _parse(path, row_no, row["eta"], float, "eta")
        it = _parse(path, row_no, row["iter"], int, "iter")
        key = (r, eta)
        bucket = curves.setdefault(
            key, {"iter": []} | {m: [] for m in METRIC_COLUMNS})
        bucket["iter"].append(it)
        for metric in METRIC_COLUMNS:
            bucket[metric].append(
                _parse(path, row_no, row[metric], float, metric))
    for key, bucket in curves.items():
        for name, values in bucket.items():
            bucket[name] = np.asarray(values)
    r_values = tuple(sorted({k[0] for k in curves}))
    eta_values = tuple(sorted({k[1] for k in curves}))
    return ConvergenceTable(r_values=r_values, eta_values=eta_values,
                            curves=curves)


def load_success(path) -> SuccessTable:
    """Parse and validate a success-grid CSV."""
    rows = _read_rows(path, SUCCESS_COLUMNS)
    cells: dict = {}
    for row_no, row in enumerate(rows, start=2):
        eta = _parse(path, row_no, row["eta"], float, "eta")
        r = _parse(path, row_no, row["r"], int, "r")
        alpha = _parse(path, row_no, row["alpha"], float, "alpha")
        trials = _parse(path, row_no, row["trials"], int, "trials")
        ratio = _parse(path, row_no, row["ratio"], float, "ratio")
        if not 0.0 <= ratio <= 1.0:
            raise SchemaError(
                f"{path}: row {row_no} has ratio {ratio!r} outside [0, 1]")
        if trials < 1:
            raise SchemaError(
                f"{path}: row {row_no} has non-positive trials {trials!r}")
        cells[(eta, r, alpha)] = (ratio, trials)
    eta_values = tuple(sorted({k[0] for k in cells}))
    r_values = tuple(sorted({k[1] for k in cells}))
    alpha_values = tuple(sorted({k[2] for k in cells}))
    shape = (len(eta_values), len(r_values), len(alpha_values))
    ratios = np.full(shape, np.nan)
    trials = np.zeros(shape, dtype=int)
    for (eta, r, alpha), (ratio, count) in cells.items():
        idx = (eta_values.index(eta), r_values.index(r),
               alpha_values.index(alpha))
        ratios[idx] = ratio
        trials[idx] = count
    if np.any(np.isnan(ratios)):
        missing = int(np.sum(np.isnan(ratios)))
        raise SchemaError(
            f"{path}: grid is ragged, {missing} (eta, r, alpha) cells have "
            f"no row")
    return SuccessTable(eta_values=eta_values, r_values=r_values,
                        alpha_values=alpha_values, ratios=ratios,
                        trials=trials)
