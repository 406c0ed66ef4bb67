"""The best rank-one approximation objective

    g(u) = || u (x) u (x) u - T ||_F^2,

its derivatives in general coordinates, and — for targets with mutually
orthogonal factors — closed-form enumeration and classification of every
critical point.

For an orthogonal target ``T = sum_i lambda_i b_i (x)^3`` (unit basis
``b_i``, ``lambda_i = ||u_i*||^3 > 0``) the critical points are indexed
by a support ``J`` of basis directions: the coefficients on ``J`` are
``s^4 / lambda_i`` where ``s = ||u||`` solves ``s^6 = 1 / sum_{i in J}
lambda_i^{-2}``.  Empty support gives the origin (gradient, Hessian both
zero, third derivative not), singleton supports give the factors
themselves (strict local minima), and every larger support is a strict
saddle with ``lambda_min(Hessian) <= -6 ||u||^4``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .tensor_core import (
    SymTensor3,
    as_factor_matrix,
    build_from_factors,
    contract12,
    fro_norm,
    symmetric_eigh,
)

__all__ = [
    "OrthogonalTarget",
    "CriticalPoint",
    "g_value",
    "g_grad",
    "g_hess",
    "third_directional",
    "enumerate_critical_points",
    "classify",
]

_ORTHO_TOL = 1e-10
_MAX_ENUM_RANK = 20

THIRD_ORDER_SADDLE = "third_order_saddle"
STRICT_LOCAL_MIN = "strict_local_min"
STRICT_SADDLE = "strict_saddle"


@dataclass(frozen=True)
class OrthogonalTarget:
    """A target tensor whose factors are mutually orthogonal.

    ``factors`` holds the (not necessarily unit) factor columns,
    ``basis`` their unit normalizations, and ``lambdas`` the cubed factor
    norms — the coefficients of the target in the basis directions.
    """

    factors: np.ndarray
    basis: np.ndarray
    lambdas: np.ndarray
    _tensor_cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        factors = as_factor_matrix(self.factors, "factors")
        norms = np.linalg.norm(factors, axis=0)
        if np.any(norms == 0.0):
            raise ValueError("orthogonal target factors must be nonzero")
        basis = factors / norms[None, :]
        gram = basis.T @ basis
        off = np.abs(gram - np.eye(gram.shape[0]))
        if off.size and off.max() > _ORTHO_TOL:
            raise ValueError(
                f"factors are not mutually orthogonal: max deviation {off.max():.3e}"
            )
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "lambdas", norms ** 3)

    @classmethod
    def from_factors(cls, factors) -> "OrthogonalTarget":
        factors = as_factor_matrix(factors, "factors")
        return cls(factors=factors, basis=factors, lambdas=np.ones(factors.shape[1]))

    @classmethod
    def diagonal(cls, lambdas: Sequence[float], n: int | None = None) -> "OrthogonalTarget":
        """Target with weights ``lambdas`` on the first standard basis vectors."""
        lam = np.asarray(lambdas, dtype=np.float64).reshape(-1)
        if lam.size == 0 or np.any(lam <= 0):
            raise ValueError("lambdas must be positive")
        r = lam.size
        if n is None:
            n = r
        if n < r:
            raise ValueError("n must be at least the number of weights")
        factors = np.zeros((n, r))
        factors[np.arange(r), np.arange(r)] = lam ** (1.0 / 3.0)
        return cls.from_factors(factors)

    @property
    def n(self) -> int:
        return self.factors.shape[0]

    @property
    def r(self) -> int:
        return self.factors.shape[1]

    def tensor(self) -> SymTensor3:
        """The assembled target ``sum_i factors_i (x)^3`` (cached)."""
        if not self._tensor_cache:
            self._tensor_cache.append(build_from_factors(self.factors))
        return self._tensor_cache[0]


@dataclass(frozen=True)
class CriticalPoint:
    """A classified critical point of ``g``."""

    point: np.ndarray
    support_size: int
    support: tuple
    klass: str
    hess_min_eig: float


# ----------------------------------------------------------------------
# derivatives of g in general coordinates
# ----------------------------------------------------------------------

def _check_dims(u: np.ndarray, T: SymTensor3) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.size != T.n:
        raise ValueError(f"vector dimension {u.size} does not match tensor {T.n}")
    return u


def g_value(u, T: SymTensor3) -> float:
    """``||u (x)^3 - T||_F^2`` without materializing the rank-one cube."""
    u = _check_dims(u, T)
    nu2 = float(np.dot(u, u))
    tuuu = float(contract12(T, u, u) @ u)
    return nu2 ** 3 - 2.0 * tuuu + fro_norm(T) ** 2


def g_grad(u, T: SymTensor3) -> np.ndarray:
    """Gradient ``6 ||u||^4 u - 6 T(., u, u)``."""
    u = _check_dims(u, T)
    nu2 = float(np.dot(u, u))
    return 6.0 * nu2 ** 2 * u - 6.0 * contract12(T, u, u)


def g_hess(u, T: SymTensor3) -> np.ndarray:
    """Hessian ``6 ||u||^4 I + 24 ||u||^2 u u^T - 12 T(., ., u)``."""
    u = _check_dims(u, T)
    n = u.size
    nu2 = float(np.dot(u, u))
    M = np.einsum("ijk,i->jk", T.data, u, optimize=True)
    return 6.0 * nu2 ** 2 * np.eye(n) + 24.0 * nu2 * np.outer(u, u) - 12.0 * M


def third_directional(u, T: SymTensor3, d) -> float:
    """Third derivative ``d^3/dt^3 g(u + t d)`` at ``t = 0`` for unit ``d``."""
    u = _check_dims(u, T)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if d.size != T.n:
        raise ValueError(f"direction dimension {d.size} does not match tensor {T.n}")
    nd = np.linalg.norm(d)
    if abs(nd - 1.0) > 1e-8:
        raise ValueError(f"direction must be unit-norm; got ||d|| = {nd}")
    a = float(np.dot(u, u))
    b = float(np.dot(u, d))
    c = float(np.dot(d, d))
    tddd = float(contract12(T, d, d) @ d)
    return 48.0 * b ** 3 + 72.0 * a * b * c - 12.0 * tddd


# ----------------------------------------------------------------------
# closed-form enumeration and classification
# ----------------------------------------------------------------------

def _grad_tolerance(u: np.ndarray) -> float:
    return 1e-6 * (1.0 + float(np.linalg.norm(u)) ** 5)


def _classify_at(point: np.ndarray, target: OrthogonalTarget,
                 support: tuple) -> CriticalPoint:
    T = target.tensor()
    if np.linalg.norm(point) <= 1e-12:
        H = g_hess(point, T)
        if np.linalg.norm(H) > 1e-9:
            raise ValueError(
                "origin classification expects a vanishing Hessian; got norm "
                f"{np.linalg.norm(H):.3e}"
            )
        witness = target.basis[:, 0]
        third = third_directional(point, T, witness)
        if third == 0.0:
            raise ValueError("origin has no nonzero third directional derivative")
        return CriticalPoint(point=point, support_size=0, support=(),
                             klass=THIRD_ORDER_SADDLE, hess_min_eig=0.0)
    w, _ = symmetric_eigh(g_hess(point, T))
    lam_min = float(w[0])
    if lam_min > 0.0:
        klass = STRICT_LOCAL_MIN
    elif lam_min < -1e-9:
        klass = STRICT_SADDLE
    else:
        raise ValueError(
            f"ambiguous classification: smallest Hessian eigenvalue {lam_min:.3e} "
            "is neither positive nor clearly negative"
        )
    return CriticalPoint(point=point, support_size=len(support), support=support,
                         klass=klass, hess_min_eig=lam_min)


def classify(point, target: OrthogonalTarget) -> CriticalPoint:
    """Classify a (near-)critical point of ``g`` for an orthogonal target.

    Requires ``||grad g(point)|| <= 1e-6 * (1 + ||point||^5)``; the
    support is read off the basis coefficients of the point.
    """
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    if point.size != target.n:
        raise ValueError(f"point dimension {point.size} does not match {target.n}")
    T = target.tensor()
    gnorm = float(np.linalg.norm(g_grad(point, T)))
    if gnorm > _grad_tolerance(point):
        raise ValueError(
            f"point is not critical: ||grad|| = {gnorm:.3e} exceeds "
            f"{_grad_tolerance(point):.3e}"
        )
    coeffs = target.basis.T @ point
    thresh = 1e-8 * (1.0 + float(np.linalg.norm(point)))
    support = tuple(int(i) for i in np.flatnonzero(np.abs(coeffs) > thresh))
    return _classify_at(point, target, support)


def enumerate_critical_points(target: OrthogonalTarget,
                              max_support: int | None = None) -> list[CriticalPoint]:
    """All critical points with support size up to ``max_support``.

    Points are returned in subset-lexicographic order (by support size,
    then lexicographically within each size), each classified with its
    smallest Hessian eigenvalue.
    """
    r = target.r
    if r > _MAX_ENUM_RANK:
        raise ValueError(
            f"enumeration over 2^r supports is capped at r <= {_MAX_ENUM_RANK}; "
            f"got r = {r}"
        )
    if max_support is None:
        max_support = r
    if not (0 <= max_support <= r):
        raise ValueError(f"max_support must lie in [0, {r}]; got {max_support}")
    lam = target.lambdas
    points: list[CriticalPoint] = []
    for size in range(max_support + 1):
        for J in combinations(range(r), size):
            if size == 0:
                point = np.zeros(target.n)
            else:
                idx = np.asarray(J, dtype=np.intp)
                s6 = 1.0 / float(np.sum(lam[idx] ** -2.0))
                s4 = s6 ** (2.0 / 3.0)
                coeffs = s4 / lam[idx]
                point = target.basis[:, idx] @ coeffs
            points.append(_classify_at(point, target, J))
    return points
