"""Gradient descent on ``U -> f(U o U o U)`` with stepsize rules,
stopping rules, and per-iteration trace logging.

Stepsize rules
--------------
* ``fixed(eta)`` — a user-chosen constant.
* ``constant()`` — ``1 / (21.6 * M * ||U0||^4)`` evaluated once at the
  initial point (spectral norm).
* ``adaptive(safety)`` — ``safety / (18 ||[grad f(T)]_(1)|| ||U|| +
  9 M ||U||^4)`` re-evaluated at every iterate (spectral norms via power
  iteration, warm-started across iterations).

The iteration is ``U <- U - eta * grad_U f`` with the factored gradient
from :mod:`symcp.factored_objective`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .factored_objective import GroundTruth, QuadraticLoss, dist, grad_U
from .tensor_core import (
    _power_top,
    as_factor_matrix,
    build_from_factors,
    fro_norm,
    khatri_rao,
    matricize1,
    matrix_spectral_norm,
)

__all__ = [
    "StepsizePolicy",
    "StopRule",
    "RunTrace",
    "adaptive_stepsize",
    "constant_stepsize",
    "contraction_factor",
    "step",
    "run",
]

_POWER_TOL = 1e-10
_POWER_MAX_ITERS = 10000


@dataclass(frozen=True)
class StepsizePolicy:
    """Which stepsize rule the solver applies at each iteration."""

    kind: str  # "fixed" | "constant" | "adaptive"
    eta: Optional[float] = None
    safety: float = 1.0
    eta_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "constant", "adaptive"):
            raise ValueError(f"unknown stepsize kind {self.kind!r}")
        if self.kind == "fixed":
            if self.eta is None or not self.eta > 0:
                raise ValueError("fixed stepsize requires eta > 0")
        if not (0.0 < self.safety <= 1.0):
            raise ValueError("safety must lie in (0, 1]")
        if not self.eta_max > 0:
            raise ValueError("eta_max must be positive")

    @classmethod
    def fixed(cls, eta: float) -> "StepsizePolicy":
        return cls(kind="fixed", eta=float(eta))

    @classmethod
    def constant(cls) -> "StepsizePolicy":
        return cls(kind="constant")

    @classmethod
    def adaptive(cls, safety: float = 1.0, eta_max: float = 1.0) -> "StepsizePolicy":
        return cls(kind="adaptive", safety=float(safety), eta_max=float(eta_max))


@dataclass(frozen=True)
class StopRule:
    """Stopping thresholds for :func:`run`.

    ``max_iters = 0`` is allowed and records the initial point only.
    ``dist_tol`` is active only when a ground truth is supplied.
    """

    max_iters: int
    grad_tol: float = 1e-10
    dist_tol: Optional[float] = None
    divergence_cap: float = 1e12

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be >= 0")
        if self.dist_tol is not None and self.dist_tol < 0:
            raise ValueError("dist_tol must be >= 0")
        if not self.divergence_cap > 0:
            raise ValueError("divergence_cap must be positive")


@dataclass(frozen=True)
class RunTrace:
    """Per-iteration history of a gradient-descent run.

    Arrays share one length; row ``i`` describes iterate ``iters[i]``
    *before* the step taken from it.  ``resid_norm`` is the Frobenius
    residual against the loss target (quadratic losses) or the
    ground-truth tensor; ``dist_to_truth`` is the permutation-matched
    factor distance.  Entries that were not computable are NaN.
    """

    iters: np.ndarray
    grad_norm: np.ndarray
    resid_norm: np.ndarray
    dist_to_truth: np.ndarray
    stepsize: np.ndarray
    f: np.ndarray
    status: str  # grad_converged | dist_converged | max_iters | diverged
    U_final: np.ndarray

    def __post_init__(self):
        lengths = {len(self.iters), len(self.grad_norm), len(self.resid_norm),
                   len(self.dist_to_truth), len(self.stepsize), len(self.f)}
        if len(lengths) != 1:
            raise ValueError("trace arrays must share one length")

    def __len__(self) -> int:
        return len(self.iters)


def contraction_factor(eta: float, m: float, c_under: float) -> float:
    """Per-step squared-distance factor ``1 - 0.26 * eta * m * c_under^4``."""
    if eta < 0 or not (m > 0 and c_under > 0):
        raise ValueError("need eta >= 0 and m, c_under > 0")
    return 1.0 - 0.26 * eta * m * c_under ** 4


def _grad_unfolding(obj, U: np.ndarray):
    """The unfolded tensor gradient [grad f(T)]_(1) at T = U o U o U."""
    if isinstance(obj, QuadraticLoss):
        kr = khatri_rao(U, U)
        return (2.0 * obj.scale) * (U @ kr.T - obj.target_mat)
    return matricize1(obj.grad_tensor(build_from_factors(U)))


def adaptive_stepsize(obj, U, safety: float = 1.0, eta_max: float = 1.0) -> float:
    """Stepsize ``safety / (18 ||[grad f]_(1)|| ||U|| + 9 M ||U||^4)``.

    Spectral norms are computed by power iteration.  A zero denominator
    (zero factors with zero gradient) returns ``eta_max``.
    """
    if not (0.0 < safety <= 1.0):
        raise ValueError("safety must lie in (0, 1]")
    U = as_factor_matrix(U)
    sigma_U = matrix_spectral_norm(U)
    sigma_G = matrix_spectral_norm(_grad_unfolding(obj, U))
    denom = 18.0 * sigma_G * sigma_U + 9.0 * obj.M * sigma_U ** 4
    if denom == 0.0:
        return eta_max
    return min(safety / denom, eta_max)


def constant_stepsize(obj, U0) -> float:
    """Stepsize ``1 / (21.6 * M * ||U0||^4)`` from the initial spectral norm."""
    U0 = as_factor_matrix(U0)
    sigma = matrix_spectral_norm(U0)
    if sigma == 0.0:
        raise ValueError("constant stepsize undefined at U0 = 0")
    return 1.0 / (21.6 * obj.M * sigma ** 4)


def step(obj, U, eta: float) -> np.ndarray:
    """One gradient step ``U - eta * grad_U f``."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    U = as_factor_matrix(U)
    return U - eta * grad_U(obj, U)


def run(obj, U0, policy: StepsizePolicy, stop: StopRule,
        ground_truth: Optional[GroundTruth] = None) -> RunTrace:
    """Iterate gradient descent, logging metrics at every iterate.

    The trace always includes the initial point (row ``iter = 0``).  A
    non-finite loss or gradient truncates the trace at the last finite
    iterate with status ``diverged``; the loss exceeding
    ``stop.divergence_cap`` also counts as divergence.
    """
    U = as_factor_matrix(U0).copy()
    fast = isinstance(obj, QuadraticLoss)
    if fast and obj.target.n != U.shape[0]:
        raise ValueError(
            f"factor rows {U.shape[0]} do not match target dimension {obj.target.n}"
        )
    target_star = None
    if ground_truth is not None and not fast:
        target_star = build_from_factors(ground_truth.U_star)

    iters: list[int] = []
    grad_norms: list[float] = []
    resid_norms: list[float] = []
    dists: list[float] = []
    etas: list[float] = []
    fvals: list[float] = []

    # warm-start vectors for the adaptive rule's two power iterations
    vU = None
    vG = None
    eta_const = None
    status = "max_iters"
    t = 0
    while True:
        kr = khatri_rao(U, U)
        if fast:
            D = U @ kr.T - obj.target_mat
            resid = float(np.linalg.norm(D))
            f_val = obj.scale * resid * resid
            G = (6.0 * obj.scale) * (D @ kr)
        else:
            T = build_from_factors(U)
            f_val = obj.value_at(T)
            Gt = obj.grad_tensor(T)
            G = 3.0 * (matricize1(Gt) @ kr)
            resid = fro_norm(T - target_star) if target_star is not None else np.nan
        g_norm = float(np.linalg.norm(G))

        if not (np.isfinite(f_val) and np.isfinite(g_norm)):
            status = "diverged"
            break

        d_val = np.nan
        if ground_truth is not None:
            d_val, _ = dist(U, ground_truth.U_star)

        if policy.kind == "fixed":
            eta_t = policy.eta
        elif policy.kind == "constant":
            if eta_const is None:
                eta_const = constant_stepsize(obj, U)
            eta_t = eta_const
        else:
            sigma_U, vU, _ = _power_top(U, _POWER_TOL, _POWER_MAX_ITERS, vU)
            if fast:
                G1 = (2.0 * obj.scale) * D
            else:
                G1 = matricize1(Gt)
            sigma_G, vG, _ = _power_top(G1, _POWER_TOL, _POWER_MAX_ITERS, vG)
            denom = 18.0 * sigma_G * sigma_U + 9.0 * obj.M * sigma_U ** 4
            eta_t = policy.eta_max if denom == 0.0 else min(
                policy.safety / denom, policy.eta_max)

        iters.append(t)
        grad_norms.append(g_norm)
        resid_norms.append(resid)
        dists.append(float(d_val))
        etas.append(float(eta_t))
        fvals.append(float(f_val))

        if f_val >= stop.divergence_cap:
            status = "diverged"
            break
        if g_norm <= stop.grad_tol:
            status = "grad_converged"
            break
        if (stop.dist_tol is not None and ground_truth is not None
                and d_val <= stop.dist_tol):
            status = "dist_converged"
            break
        if t >= stop.max_iters:
            status = "max_iters"
            break

        U = U - eta_t * G
        t += 1

    return RunTrace(
        iters=np.asarray(iters, dtype=np.int64),
        grad_norm=np.asarray(grad_norms),
        resid_norm=np.asarray(resid_norms),
        dist_to_truth=np.asarray(dists),
        stepsize=np.asarray(etas),
        f=np.asarray(fvals),
        status=status,
        U_final=U,
    )
