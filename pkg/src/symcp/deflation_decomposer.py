"""Full symmetric decomposition by successive rank-one extraction.

Each round finds a second-order stationary point (SOSP) of the rank-one
objective ``g(u) = ||u (x)^3 - T||_F^2`` — gradient descent with
negative-curvature perturbations and seeded restarts — then removes the
recovered component by exact projection:

    T  <-  T - <T, v (x)^3> v (x)^3,     v = u / ||u||.

For targets with mutually orthogonal factors every nonzero SOSP is a
factor (see :mod:`symcp.rank1_landscape`), the projection removes it
exactly, and the loop terminates with all factors recovered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gd_solver import StopRule
from .rank1_landscape import g_grad, g_hess
from .tensor_core import (
    SymTensor3,
    contract12,
    fro_norm,
    matricize1,
    outer3,
    symmetric_eigh,
)

__all__ = [
    "SospConfig",
    "SospResult",
    "DecompositionResult",
    "find_sosp",
    "deflate",
    "decompose",
]

# bound on curvature-escape rounds within one descent attempt
_MAX_ESCAPES = 50
# stream constants separating the decomposer's random draws
_INIT_STREAM = 11
_RETRY_STREAM = 13


@dataclass(frozen=True)
class SospConfig:
    """Tolerances and budgets for the second-order stationary point finder.

    A point qualifies when ``||grad g|| <= grad_tol`` and the smallest
    Hessian eigenvalue is ``>= -hess_tol``.  On a first-order stall with
    escaping curvature, the iterate is nudged ``perturb_radius`` along
    the most negative eigenvector; ``max_restarts`` bounds fresh seeded
    starts.  ``inner`` limits each descent phase.
    """

    grad_tol: float = 1e-9
    hess_tol: float = 1e-7
    perturb_radius: float = 1e-3
    max_restarts: int = 5
    inner: StopRule = field(default_factory=lambda: StopRule(
        max_iters=5000, grad_tol=1e-9))
    seed: int = 0

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.hess_tol > 0 and self.perturb_radius > 0):
            raise ValueError("tolerances and perturbation radius must be positive")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")


@dataclass(frozen=True)
class SospResult:
    """Outcome of the SOSP search."""

    point: np.ndarray
    status: str  # "ok" | "failed"
    g_value: float
    grad_norm: float
    hess_min_eig: float
    restarts_used: int


@dataclass(frozen=True)
class DecompositionResult:
    """Recovered factors in discovery order plus residual bookkeeping.

    ``residual_history[k]`` is the residual norm after ``k`` accepted
    factors (entry 0 is the input norm).  ``factor_errors`` aligns each
    recovered factor with its closest distinct true factor (when ground
    truth is supplied) and reports the Euclidean error.
    """

    factors: np.ndarray
    residual_norm: float
    residual_history: np.ndarray
    status: str  # "complete" | "incomplete"
    factor_errors: Optional[np.ndarray] = None

    @property
    def num_factors(self) -> int:
        return self.factors.shape[1]


def _sphere_point(n: int, radius: float, seed_seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    v = rng.standard_normal(n)
    norm = np.linalg.norm(v)
    if norm == 0.0:  # pragma: no cover - probability zero
        v[0] = 1.0
        norm = 1.0
    return (radius / norm) * v


def _descend(T_mat: np.ndarray, norm_T_sq: float, u0: np.ndarray,
             cfg: SospConfig) -> np.ndarray:
    """Gradient descent on g from u0 until first-order stall or budget.

    The stepsize is the safe adaptive rule with the unfolding spectral
    norm replaced by its Frobenius upper bound 2*sqrt(g(u)) — always at
    or below the safe threshold, and identical to it in the limit at a
    stationary point, where the residual term vanishes.
    """
    u = np.array(u0, dtype=np.float64)
    for _ in range(cfg.inner.max_iters):
        tv = T_mat @ np.outer(u, u).ravel(order="F")  # T(., u, u)
        nu2 = float(u @ u)
        grad = (6.0 * nu2 * nu2) * u - 6.0 * tv
        grad_norm = float(np.linalg.norm(grad))
        if not np.isfinite(grad_norm) or grad_norm <= cfg.grad_tol:
            break
        g_val = max(nu2 ** 3 - 2.0 * float(u @ tv) + norm_T_sq, 0.0)
        denom = 36.0 * np.sqrt(g_val * nu2) + 18.0 * nu2 * nu2
        u = u - (grad / denom if denom > 0.0 else grad)
    return u


def _one_restart(T: SymTensor3, T_mat: np.ndarray, cfg: SospConfig,
                 restart: int) -> tuple[bool, np.ndarray]:
    """Descend from one seeded start; True when the curvature test passed."""
    seed_seq = np.random.SeedSequence(cfg.seed, spawn_key=(_INIT_STREAM, restart))
    u = _sphere_point(T.n, fro_norm(T) ** (1.0 / 3.0), seed_seq)
    norm_T_sq = fro_norm(T) ** 2
    for _ in range(_MAX_ESCAPES):
        u = _descend(T_mat, norm_T_sq, u, cfg)
        if float(np.linalg.norm(g_grad(u, T))) > cfg.grad_tol:
            return False, u  # descent budget ran out before a stall
        w, V = symmetric_eigh(g_hess(u, T))
        if float(w[0]) >= -cfg.hess_tol:
            return True, u
        # escape the strict saddle: step along the most negative
        # eigenvector, taking the sign that lowers g (ties toward +)
        v = V[:, 0]
        cand_plus = u + cfg.perturb_radius * v
        cand_minus = u - cfg.perturb_radius * v
        u = (cand_plus
             if _g_value(cand_plus, T) <= _g_value(cand_minus, T)
             else cand_minus)
    return False, u


def find_sosp(T: SymTensor3, cfg: SospConfig = SospConfig()) -> SospResult:
    """Search for a point with small gradient and nearly-PSD Hessian.

    Each restart draws a fresh start uniformly on the sphere of radius
    ``||T||_F^(1/3)`` (the scale of the factors), descends to a
    first-order stall, and escapes strict saddles along the most negative
    Hessian eigenvector until the curvature test passes.  The origin is a
    valid outcome: its gradient and Hessian both vanish.

    All restarts are evaluated and the qualifying point with the lowest
    objective value wins, ties broken by restart index — so the result
    does not depend on evaluation order.  If no restart qualifies, the
    lowest-objective stalled point is returned with status ``"failed"``.
    """
    T_mat = matricize1(T)
    best_ok: Optional[tuple[float, np.ndarray]] = None
    best_any: Optional[tuple[float, np.ndarray]] = None
    for restart in range(cfg.max_restarts):
        ok, u = _one_restart(T, T_mat, cfg, restart)
        gval = _g_value(u, T)
        if ok and (best_ok is None or gval < best_ok[0]):
            best_ok = (gval, u)
        if best_any is None or gval < best_any[0]:
            best_any = (gval, u)
    assert best_any is not None
    status = "ok" if best_ok is not None else "failed"
    gval, point = best_ok if best_ok is not None else best_any
    w, _ = symmetric_eigh(g_hess(point, T))
    return SospResult(point=point, status=status, g_value=gval,
                      grad_norm=float(np.linalg.norm(g_grad(point, T))),
                      hess_min_eig=float(w[0]),
                      restarts_used=cfg.max_restarts)


def _g_value(u: np.ndarray, T: SymTensor3) -> float:
    nu2 = float(np.dot(u, u))
    tuuu = float(contract12(T, u, u) @ u)
    return nu2 ** 3 - 2.0 * tuuu + fro_norm(T) ** 2


def deflate(T: SymTensor3, u_hat) -> SymTensor3:
    """Remove the rank-one component along ``u_hat`` by exact projection.

    Uses the unit direction ``v = u_hat / ||u_hat||`` and subtracts
    ``<T, v (x)^3> v (x)^3``; for a target with orthogonal factors and
    ``u_hat`` equal to one of them, the removal is exact.
    """
    u_hat = np.asarray(u_hat, dtype=np.float64).reshape(-1)
    if u_hat.size != T.n:
        raise ValueError(f"direction dimension {u_hat.size} does not match {T.n}")
    norm = np.linalg.norm(u_hat)
    if norm == 0.0:
        raise ValueError("cannot deflate along the zero vector")
    v = u_hat / norm
    weight = float(contract12(T, v, v) @ v)
    return T - weight * outer3(v)


def decompose(T: SymTensor3, cfg: SospConfig = SospConfig(), r_max: int = 1,
              ground_truth=None) -> DecompositionResult:
    """Recover factors one at a time until the residual is numerically zero.

    Each round finds an SOSP of the current residual tensor and deflates.
    A near-zero SOSP (norm below ``1e-6 ||T||_F^(1/3)``) is the origin in
    disguise; it triggers a reseeded retry, bounded by the restart
    budget.  Stops when the residual norm falls below
    ``1e-8 (1 + ||T_input||_F)`` (status ``complete``) or after ``r_max``
    rounds (status ``incomplete``).
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    input_norm = fro_norm(T)
    resid_tol = 1e-8 * (1.0 + input_norm)
    work = T
    recovered: list[np.ndarray] = []
    history = [input_norm]
    status = "incomplete"
    for round_idx in range(r_max):
        resid = fro_norm(work)
        if resid <= resid_tol:
            status = "complete"
            break
        zero_thresh = 1e-6 * resid ** (1.0 / 3.0)
        accepted = None
        for retry in range(cfg.max_restarts):
            retry_cfg = SospConfig(
                grad_tol=cfg.grad_tol, hess_tol=cfg.hess_tol,
                perturb_radius=cfg.perturb_radius,
                max_restarts=cfg.max_restarts, inner=cfg.inner,
                seed=int(np.random.SeedSequence(
                    cfg.seed, spawn_key=(_RETRY_STREAM, round_idx, retry)
                ).generate_state(1)[0]),
            )
            result = find_sosp(work, retry_cfg)
            if result.status == "ok" and np.linalg.norm(result.point) > zero_thresh:
                accepted = result.point
                break
        if accepted is None:
            break  # could not extract another factor; report what we have
        recovered.append(accepted)
        work = deflate(work, accepted)
        history.append(fro_norm(work))
    else:
        if fro_norm(work) <= resid_tol:
            status = "complete"

    factors = (np.stack(recovered, axis=1) if recovered
               else np.zeros((T.n, 0)))
    errors = None
    if ground_truth is not None:
        errors = _match_errors(factors, np.asarray(ground_truth, dtype=np.float64))
    return DecompositionResult(
        factors=factors,
        residual_norm=fro_norm(work),
        residual_history=np.asarray(history),
        status=status,
        factor_errors=errors,
    )


def _match_errors(recovered: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Distance from each recovered factor to its assigned true factor."""
    from scipy.optimize import linear_sum_assignment

    k = recovered.shape[1]
    if k == 0:
        return np.zeros(0)
    cost = np.sum((recovered[:, :, None] - truth[:, None, :]) ** 2, axis=0)
    rows, cols = linear_sum_assignment(cost)
    errors = np.zeros(k)
    errors[rows] = np.sqrt(cost[rows, cols])
    return errors
