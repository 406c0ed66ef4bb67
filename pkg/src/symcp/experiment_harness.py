"""Seeded experiment drivers and delimited-file plumbing.

Two experiment families share one configuration type:

* convergence traces — one gradient-descent run per (rank, stepsize)
  pair from a warm start, recording gradient norm, residual norm and
  distance to the planted factors at every iteration;
* success grids — many independent trials per (stepsize, rank,
  perturbation size) cell, each trial drawing a fresh planted instance
  and counting whether descent returns to the planted factors.

All randomness is derived from a master seed through ``SeedSequence``
spawn keys built from experiment indices, so results are bit-identical
across runs and worker counts.  This module also owns the on-disk
formats: factor-matrix CSV, flat tensor text files, the landscape CSV,
and verification report records.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, fields
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .assumption_verifier import (
    check_assumptions,
    check_hadamard_gram_bounds,
    check_regularity,
    check_sandwich,
)
from .factored_objective import QuadraticLoss, dist, make_ground_truth
from .gd_solver import StepsizePolicy, StopRule, adaptive_stepsize, run
from .rank1_landscape import OrthogonalTarget, enumerate_critical_points, g_grad
from .tensor_core import (
    SymTensor3,
    _canonicalize,
    build_from_factors,
    khatri_rao,
)

__all__ = [
    "ExperimentConfig",
    "SuccessGrid",
    "FIGURE1_COLUMNS",
    "TABLE1_COLUMNS",
    "LANDSCAPE_COLUMNS",
    "sample_sphere_factors",
    "perturb_init",
    "run_figure1",
    "run_table1",
    "landscape_rows",
    "verify_records",
    "write_csv_rows",
    "write_factors_csv",
    "read_factors_csv",
    "write_tensor_file",
    "read_tensor_file",
]

FIGURE1_COLUMNS = ("r", "eta", "iter", "grad_norm", "resid_norm", "dist")
TABLE1_COLUMNS = ("eta", "r", "alpha", "trials", "successes", "ratio")
LANDSCAPE_COLUMNS = ("support_size", "support", "coefficients",
                     "grad_norm", "hess_min_eig", "classification")

# stream tags keeping the independent random draws of each driver apart
_TABLE_STREAM = 101
_FIGURE_STREAM = 103
_VERIFY_STREAM = 107

_DIVERGENCE_CAP = 1e12
_GRAD_EXIT_TOL = 1e-10
_DIST_CHECK_EVERY = 25


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Shared knobs for the trace and grid drivers.

    ``alpha_list`` holds the perturbation sizes for the success grid;
    ``figure_alpha`` is the single warm-start size used by the trace
    driver.  ``scale`` is the objective prefactor s in
    ``f = s * ||T - T*||_F^2``.
    """

    n: int = 64
    r_list: Optional[tuple[int, ...]] = None
    alpha_list: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    figure_alpha: float = 0.07
    eta_list: tuple[float, ...] = (0.02, 0.04, 0.06)
    iters: int = 1000
    trials: int = 100
    success_tol: float = 1e-3
    master_seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.r_list is None:
            object.__setattr__(
                self, "r_list",
                (self.n // 2, self.n, (3 * self.n) // 2))
        object.__setattr__(self, "r_list", tuple(int(r) for r in self.r_list))
        object.__setattr__(self, "alpha_list",
                           tuple(float(a) for a in self.alpha_list))
        object.__setattr__(self, "eta_list",
                           tuple(float(e) for e in self.eta_list))
        if not self.r_list or not self.alpha_list or not self.eta_list:
            raise ValueError("r_list, alpha_list and eta_list must be nonempty")
        if any(r < 1 for r in self.r_list):
            raise ValueError("every rank in r_list must be >= 1")
        if any(a < 0 for a in self.alpha_list) or self.figure_alpha < 0:
            raise ValueError("perturbation sizes must be >= 0")
        if any(e <= 0 for e in self.eta_list):
            raise ValueError("every stepsize must be positive")
        if self.iters < 1 or self.trials < 1:
            raise ValueError("iters and trials must be >= 1")
        if not self.success_tol > 0:
            raise ValueError("success_tol must be positive")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "ExperimentConfig":
        """Build a config from string key-value pairs (config files)."""
        known = {f.name for f in fields(cls)}
        kwargs: dict = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ValueError(f"unknown config key: {key!r}")
            try:
                if key in ("n", "iters", "trials", "master_seed"):
                    kwargs[key] = int(raw)
                elif key in ("figure_alpha", "success_tol", "scale"):
                    kwargs[key] = float(raw)
                elif key == "r_list":
                    kwargs[key] = tuple(int(v) for v in _split_list(raw))
                else:  # alpha_list, eta_list
                    kwargs[key] = tuple(float(v) for v in _split_list(raw))
            except ValueError as exc:
                raise ValueError(f"config key {key!r}: {exc}") from None
        return cls(**kwargs)

    def as_mapping(self) -> dict[str, str]:
        """String form of every field, inverse of :meth:`from_mapping`."""
        out: dict[str, str] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                out[f.name] = ",".join(_fmt_number(v) for v in value)
            else:
                out[f.name] = _fmt_number(value)
        return out


def _split_list(raw: str) -> list[str]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return parts


@dataclass(frozen=True)
class SuccessGrid:
    """Success counts over the (eta, r, alpha) grid."""

    eta_values: tuple[float, ...]
    r_values: tuple[int, ...]
    alpha_values: tuple[float, ...]
    successes: np.ndarray  # shape (len(eta), len(r), len(alpha)), int
    trials: int

    def __post_init__(self):
        expected = (len(self.eta_values), len(self.r_values),
                    len(self.alpha_values))
        if self.successes.shape != expected:
            raise ValueError(
                f"success grid shape {self.successes.shape} does not match "
                f"axes {expected}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if np.any(self.successes < 0) or np.any(self.successes > self.trials):
            raise ValueError("success counts must lie in [0, trials]")

    @property
    def ratios(self) -> np.ndarray:
        return self.successes / float(self.trials)

    def ratio(self, eta: float, r: int, alpha: float) -> float:
        i = self.eta_values.index(eta)
        j = self.r_values.index(r)
        k = self.alpha_values.index(alpha)
        return float(self.successes[i, j, k]) / self.trials

    def to_rows(self) -> list[tuple]:
        rows = []
        for i, eta in enumerate(self.eta_values):
            for j, r in enumerate(self.r_values):
                for k, alpha in enumerate(self.alpha_values):
                    s = int(self.successes[i, j, k])
                    rows.append((eta, r, alpha, self.trials, s,
                                 s / self.trials))
        return rows


# ---------------------------------------------------------------------------
# instance generation
# ---------------------------------------------------------------------------

def sample_sphere_factors(n: int, r: int, seed) -> np.ndarray:
    """Factor matrix with i.i.d. uniform-on-the-sphere unit columns."""
    if n < 1 or r < 1:
        raise ValueError("n and r must be >= 1")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, r))
    norms = np.linalg.norm(G, axis=0)
    if np.any(norms == 0.0):  # pragma: no cover - probability zero
        raise ValueError("degenerate zero draw")
    return G / norms


def perturb_init(U_star: np.ndarray, alpha: float, seed) -> np.ndarray:
    """Starting point ``U* + alpha * D`` with ``||D||_F = 1``."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    rng = np.random.default_rng(seed)
    D = rng.standard_normal(U_star.shape)
    D /= np.linalg.norm(D)
    return U_star + alpha * D


def _figure_seeds(master_seed: int, r_idx: int):
    seed_u = np.random.SeedSequence(master_seed,
                                    spawn_key=(_FIGURE_STREAM, r_idx, 0))
    seed_d = np.random.SeedSequence(master_seed,
                                    spawn_key=(_FIGURE_STREAM, r_idx, 1))
    return seed_u, seed_d


def _table_seeds(master_seed: int, eta_idx: int, r_idx: int, alpha_idx: int,
                 trial_idx: int):
    base = (_TABLE_STREAM, eta_idx, r_idx, alpha_idx, trial_idx)
    seed_u = np.random.SeedSequence(master_seed, spawn_key=base + (0,))
    seed_d = np.random.SeedSequence(master_seed, spawn_key=base + (1,))
    return seed_u, seed_d


# ---------------------------------------------------------------------------
# convergence traces
# ---------------------------------------------------------------------------

def run_figure1(cfg: ExperimentConfig, out_path=None) -> list[tuple]:
    """Trace gradient descent for every (r, eta) pair.

    One seeded instance is drawn per rank and shared by all stepsizes,
    so curves within a rank differ only in eta.  Rows are
    ``(r, eta, iter, grad_norm, resid_norm, dist)`` with the iteration
    column covering 0..iters inclusive of the starting point.
    """
    rows: list[tuple] = []
    for r_idx, r in enumerate(cfg.r_list):
        seed_u, seed_d = _figure_seeds(cfg.master_seed, r_idx)
        U_star = sample_sphere_factors(cfg.n, r, seed_u)
        gt = make_ground_truth(U_star)
        loss = QuadraticLoss(build_from_factors(U_star), scale=cfg.scale,
                             r_budget=r)
        U0 = perturb_init(U_star, cfg.figure_alpha, seed_d)
        for eta in cfg.eta_list:
            trace = run(loss, U0, StepsizePolicy.fixed(eta),
                        StopRule(max_iters=cfg.iters, grad_tol=0.0),
                        ground_truth=gt)
            for t in range(len(trace)):
                rows.append((r, eta, int(trace.iters[t]),
                             float(trace.grad_norm[t]),
                             float(trace.resid_norm[t]),
                             float(trace.dist_to_truth[t])))
    if out_path is not None:
        write_csv_rows(out_path, FIGURE1_COLUMNS, rows)
    return rows


# ---------------------------------------------------------------------------
# success grids
# ---------------------------------------------------------------------------

def _final_distance(cfg: ExperimentConfig, U_star: np.ndarray,
                    U0: np.ndarray, eta: float) -> float:
    """Distance to truth after fixed-stepsize descent on one instance.

    A streamlined descent loop for trials whose only output is the final
    distance: the Gram identity ``KR^T KR = (U^T U) o (U^T U)`` halves
    the per-step matrix work, the permutation-matched distance is
    evaluated every few steps (it only gates an early exit; the verdict
    is always a directly computed distance), and runs whose residual
    passes the divergence cap fail immediately.
    """
    T1 = U_star @ khatri_rao(U_star, U_star).T
    norm_T_sq = float(np.sum(T1 * T1))
    six_s = 6.0 * cfg.scale
    exit_dist = 0.5 * cfg.success_tol
    U = U0.copy()
    for it in range(1, cfg.iters + 1):
        KR = khatri_rao(U, U)
        A = T1 @ KR
        G1 = U.T @ U
        W = G1 * G1
        B = U @ W
        resid_sq = float(np.sum(G1 * W)) - 2.0 * float(np.sum(A * U)) + norm_T_sq
        if not np.isfinite(resid_sq) or resid_sq > _DIVERGENCE_CAP ** 2:
            return np.inf
        G = B - A
        grad_norm = six_s * float(np.linalg.norm(G))
        if not np.isfinite(grad_norm):
            return np.inf
        if grad_norm <= _GRAD_EXIT_TOL:
            break
        U = U - (eta * six_s) * G
        if it % _DIST_CHECK_EVERY == 0:
            d, _ = dist(U, U_star)
            if d <= exit_dist:
                return d
    d, _ = dist(U, U_star)
    return d


def _trial_success(args) -> bool:
    cfg, eta_idx, r_idx, alpha_idx, trial_idx = args
    eta = cfg.eta_list[eta_idx]
    r = cfg.r_list[r_idx]
    alpha = cfg.alpha_list[alpha_idx]
    seed_u, seed_d = _table_seeds(cfg.master_seed, eta_idx, r_idx, alpha_idx,
                                  trial_idx)
    U_star = sample_sphere_factors(cfg.n, r, seed_u)
    U0 = perturb_init(U_star, alpha, seed_d)
    return _final_distance(cfg, U_star, U0, eta) <= cfg.success_tol


def run_table1(cfg: ExperimentConfig, workers: int = 1,
               out_path=None) -> SuccessGrid:
    """Success ratios over the (eta, r, alpha) grid.

    Every trial draws a fresh planted instance and perturbation from
    seeds derived from the cell and trial indices, so the grid is
    reproducible regardless of worker count or scheduling.  Success
    means the final permutation-matched distance is at most
    ``success_tol``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    shape = (len(cfg.eta_list), len(cfg.r_list), len(cfg.alpha_list))
    jobs = [(cfg, i, j, k, t)
            for i in range(shape[0])
            for j in range(shape[1])
            for k in range(shape[2])
            for t in range(cfg.trials)]
    if workers == 1:
        outcomes = [_trial_success(job) for job in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor
        chunk = max(1, len(jobs) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_trial_success, jobs, chunksize=chunk))
    successes = np.zeros(shape, dtype=np.int64)
    for (cfg_, i, j, k, t), ok in zip(jobs, outcomes):
        successes[i, j, k] += bool(ok)
    grid = SuccessGrid(eta_values=cfg.eta_list, r_values=cfg.r_list,
                       alpha_values=cfg.alpha_list, successes=successes,
                       trials=cfg.trials)
    if out_path is not None:
        write_csv_rows(out_path, TABLE1_COLUMNS, grid.to_rows())
    return grid


# ---------------------------------------------------------------------------
# landscape table
# ---------------------------------------------------------------------------

def landscape_rows(target: OrthogonalTarget,
                   max_support: Optional[int] = None) -> list[tuple]:
    """One row per enumerated critical point of the rank-one objective."""
    T = target.tensor()
    rows = []
    for cp in enumerate_critical_points(target, max_support=max_support):
        support = "|".join(str(i) for i in cp.support)
        coeffs = target.basis[:, list(cp.support)].T @ cp.point
        coeff_str = "|".join(_fmt_number(float(c)) for c in coeffs)
        gnorm = float(np.linalg.norm(g_grad(cp.point, T)))
        rows.append((cp.support_size, support, coeff_str, gnorm,
                     float(cp.hess_min_eig), cp.klass))
    return rows


# ---------------------------------------------------------------------------
# verification reports
# ---------------------------------------------------------------------------

def verify_records(cfg: ExperimentConfig) -> list[dict]:
    """Assumption, regularity and sandwich summaries for each rank.

    For every rank a planted instance with unit columns is drawn, the
    static factor-matrix conditions are checked, and ``cfg.trials``
    Monte-Carlo points probe the descent inequality inside the warm ball
    and the residual/factor-distance sandwich at a fixed offset.
    """
    records = []
    for r_idx, r in enumerate(cfg.r_list):
        seed = np.random.SeedSequence(cfg.master_seed,
                                      spawn_key=(_VERIFY_STREAM, r_idx, 0))
        U_star = sample_sphere_factors(cfg.n, r, seed)
        gt = make_ground_truth(U_star)
        loss = QuadraticLoss(build_from_factors(U_star), scale=cfg.scale,
                             r_budget=r)
        assumptions = check_assumptions(gt)
        gram = check_hadamard_gram_bounds(gt)
        radius = 0.07 * (loss.m / loss.M) * gt.c_under / gt.omega ** 3
        reg_pass = 0
        reg_min_margin = np.inf
        sand_pass = 0
        ratio_lo, ratio_hi = np.inf, -np.inf
        rng = np.random.default_rng(np.random.SeedSequence(
            cfg.master_seed, spawn_key=(_VERIFY_STREAM, r_idx, 1)))
        for _ in range(cfg.trials):
            Delta = rng.standard_normal(U_star.shape)
            Delta /= np.linalg.norm(Delta)
            U = U_star + (radius * rng.uniform()) * Delta
            cert = check_regularity(loss, gt, U, adaptive_stepsize(loss, U))
            reg_pass += cert.margin >= -1e-9
            reg_min_margin = min(reg_min_margin, cert.margin)
            Delta2 = rng.standard_normal(U_star.shape)
            Delta2 /= np.linalg.norm(Delta2)
            sw = check_sandwich(gt, U_star + 0.05 * Delta2)
            sand_pass += sw.lower_ok and sw.upper_ok
            if np.isfinite(sw.ratio):
                ratio_lo = min(ratio_lo, sw.ratio)
                ratio_hi = max(ratio_hi, sw.ratio)
        record: dict = {"n": cfg.n, "r": r, "master_seed": cfg.master_seed,
                        "scale": cfg.scale, "samples": cfg.trials}
        record.update(assumptions.as_record())
        record.update({f"gram_{k}": v for k, v in gram.as_record().items()})
        record.update({
            "warm_radius": radius,
            "regularity_pass": int(reg_pass),
            "regularity_min_margin": float(reg_min_margin),
            "sandwich_pass": int(sand_pass),
            "sandwich_ratio_min": float(ratio_lo),
            "sandwich_ratio_max": float(ratio_hi),
        })
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# delimited-file plumbing
# ---------------------------------------------------------------------------

def _fmt_number(value) -> str:
    """Shortest exact decimal form: round-trips through float()."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv_rows(path, header: Sequence[str], rows: Iterable[tuple]) -> None:
    """Write rows with the shared numeric formatting rules."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt_number(v) for v in row])


def write_factors_csv(path, U: np.ndarray) -> None:
    """Factor matrix as CSV: header f1..fr, one row per coordinate."""
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise ValueError("factor matrix must be two-dimensional")
    header = [f"f{p + 1}" for p in range(U.shape[1])]
    write_csv_rows(path, header, [tuple(row) for row in U])


def read_factors_csv(path) -> np.ndarray:
    """Parse a factor-matrix CSV written by :func:`write_factors_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row")
        expected = [f"f{p + 1}" for p in range(len(header))]
        if header != expected:
            raise ValueError(
                f"{path}: malformed header {header!r}, expected {expected!r}")
        r = len(header)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != r:
                raise ValueError(
                    f"{path}: line {line_no} has {len(row)} fields, "
                    f"expected {r}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(
                    f"{path}: line {line_no} contains a non-numeric value"
                ) from None
    if not rows:
        raise ValueError(f"{path}: no coordinate rows after the header")
    U = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(U)):
        raise ValueError(f"{path}: non-finite value in factor matrix")
    return U


def write_tensor_file(path, T: SymTensor3) -> None:
    """Flat text tensor format: ``symtensor3 n`` then n^3 scalars.

    Scalars appear in the linear layout with the first index fastest and
    are printed in shortest round-trip decimal form, so write-then-read
    reproduces the tensor bit-exactly.
    """
    flat = T.data.ravel(order="F")
    with open(path, "w") as fh:
        fh.write(f"symtensor3 {T.n}\n")
        fh.write("\n".join(_fmt_number(float(v)) for v in flat))
        fh.write("\n")


def read_tensor_file(path) -> SymTensor3:
    """Parse the flat tensor format, validating header and entry count."""
    with open(path) as fh:
        first = fh.readline()
        tokens = first.split()
        if len(tokens) != 2 or tokens[0] != "symtensor3":
            raise ValueError(
                f"{path}: malformed header {first.strip()!r}, expected "
                f"'symtensor3 <n>'")
        try:
            n = int(tokens[1])
        except ValueError:
            raise ValueError(
                f"{path}: malformed dimension {tokens[1]!r}") from None
        if n < 1:
            raise ValueError(f"{path}: dimension must be >= 1, got {n}")
        body = fh.read().split()
    expected = n ** 3
    if len(body) != expected:
        raise ValueError(
            f"{path}: expected {expected} values for n={n}, found {len(body)}")
    try:
        values = np.asarray([float(v) for v in body], dtype=np.float64)
    except ValueError:
        raise ValueError(f"{path}: non-numeric tensor value") from None
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: non-finite tensor value")
    cube = values.reshape((n, n, n), order="F")
    if np.array_equal(cube, _canonicalize(cube)):
        return SymTensor3._wrap(cube)
    return SymTensor3(cube)  # symmetrize-or-reject path for foreign files


# ---------------------------------------------------------------------------
# run manifests
# ---------------------------------------------------------------------------

def write_manifest(path, command: str, cfg: Optional[ExperimentConfig] = None,
                   extra: Optional[Mapping[str, object]] = None) -> None:
    """Record the command, versions and full configuration of a run.

    ``cfg`` may be omitted for commands whose inputs are files rather
    than an experiment configuration; their specifics go in ``extra``.
    """
    record: dict[str, object] = {
        "command": command,
        "package": "symcp",
        "package_version": __version__,
        "python_version": sys.version.split()[0],
        "numpy_version": np.__version__,
    }
    try:
        import scipy
        record["scipy_version"] = scipy.__version__
    except ImportError:  # pragma: no cover - scipy is a hard dependency
        record["scipy_version"] = "absent"
    if cfg is not None:
        for key, value in cfg.as_mapping().items():
            record[f"config_{key}"] = value
    if extra:
        record.update(extra)
    lines = [f"{k}={_fmt_number(v)}" for k, v in record.items()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
