"""Numeric diagnostics for the local-convergence theory: incoherence and
spectrum conditions on the ground-truth factors, the per-point regularity
inequality driving linear convergence, the residual-vs-distance sandwich
bounds, and the Hadamard-Gram eigenvalue bounds.

All quantities are measured with exact linear algebra (power iteration
for spectral norms, Jacobi for eigenvalues); pass/fail flags are pure
functions of the measured values and the supplied thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .factored_objective import GroundTruth, dist, grad_U
from .gd_solver import adaptive_stepsize
from .tensor_core import (
    build_from_factors,
    fro_norm,
    hadamard,
    matrix_spectral_norm,
    symmetric_eigh,
)

__all__ = [
    "AssumptionReport",
    "RegularityCertificate",
    "SandwichReport",
    "HadamardGramReport",
    "default_gamma",
    "check_assumptions",
    "check_regularity",
    "check_sandwich",
    "check_hadamard_gram_bounds",
    "format_record",
]


def default_gamma(n: int) -> float:
    """Default polylog slack ``ln(n)^2`` used by the threshold checks."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return math.log(n) ** 2


@dataclass(frozen=True)
class AssumptionReport:
    """Measured factor-geometry quantities and their threshold flags.

    * ``mu_hat`` — incoherence of the normalized factors,
      ``max_{i != j} |<u_i, u_j>|``; passes if ``<= gamma / sqrt(n)``.
    * ``spec_norm`` — ``||U_hat||``; passes if ``<= 1 + c1 sqrt(r/n)``.
    * ``gram_dev`` — ``||(U_hat^T U_hat) o (U_hat^T U_hat) - I||``;
      passes if ``<= gamma sqrt(r) / n``.
    * ``mu_star`` — incoherence of the unnormalized factors, reported
      against the derived bound ``c_bar^2 gamma / sqrt(n)``.
    """

    mu_hat: float
    mu_star: float
    mu_star_bound: float
    spec_norm: float
    gram_dev: float
    gamma: float
    c1: float
    pass_incoherence: bool
    pass_spectrum: bool
    pass_gram_isometry: bool
    pass_star_incoherence: bool

    @property
    def all_pass(self) -> bool:
        return (self.pass_incoherence and self.pass_spectrum
                and self.pass_gram_isometry)

    def as_record(self) -> dict:
        return {
            "mu_hat": self.mu_hat,
            "mu_star": self.mu_star,
            "mu_star_bound": self.mu_star_bound,
            "spec_norm": self.spec_norm,
            "gram_dev": self.gram_dev,
            "gamma": self.gamma,
            "c1": self.c1,
            "pass_incoherence": self.pass_incoherence,
            "pass_spectrum": self.pass_spectrum,
            "pass_gram_isometry": self.pass_gram_isometry,
            "pass_star_incoherence": self.pass_star_incoherence,
        }


@dataclass(frozen=True)
class RegularityCertificate:
    """Both sides of the local regularity inequality at a single point.

    ``lhs = <grad_U f, U - U* P>`` with ``P`` the distance-minimizing
    column permutation; ``rhs = eta/2 * ||grad_U f||_F^2 +
    0.13 m c_under^4 dist^2``.  ``margin = lhs - rhs``; a nonnegative
    margin means the inequality holds at this point.  ``eta_bound`` is
    the largest stepsize the inequality is stated for; ``eta_ok`` records
    whether the supplied ``eta`` respects it.
    """

    lhs: float
    rhs: float
    margin: float
    eta: float
    eta_bound: float
    eta_ok: bool
    dist_value: float

    def as_record(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "eta": self.eta,
            "eta_bound": self.eta_bound,
            "eta_ok": self.eta_ok,
            "dist": self.dist_value,
        }


@dataclass(frozen=True)
class SandwichReport:
    """Two-sided comparison of tensor residual against factor distance.

    Checks ``1.679 c_under^4 ||H||_F^2 <= ||T - T*||_F^2 <=
    10.336 omega^4 c_under^4 ||H||_F^2`` where ``H = U - U* P``.
    ``in_radius`` records whether ``dist <= 0.07 c_under / omega^3``,
    the hypothesis under which the bounds are claimed.
    """

    lower_ok: bool
    upper_ok: bool
    ratio: float
    h_norm: float
    resid_norm: float
    in_radius: bool

    def as_record(self) -> dict:
        return {
            "lower_ok": self.lower_ok,
            "upper_ok": self.upper_ok,
            "ratio": self.ratio,
            "h_norm": self.h_norm,
            "resid_norm": self.resid_norm,
            "in_radius": self.in_radius,
        }


@dataclass(frozen=True)
class HadamardGramReport:
    """Extreme eigenvalues of ``(U*^T U*) o (U*^T U*)`` vs. their bounds."""

    lam_min: float
    lam_max: float
    lower_bound: float
    upper_bound: float
    ok: bool

    def as_record(self) -> dict:
        return {
            "lam_min": self.lam_min,
            "lam_max": self.lam_max,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "ok": self.ok,
        }


def format_record(record: dict) -> str:
    """Render a report dict as sorted ``key=value`` lines."""
    lines = []
    for key in record:
        val = record[key]
        if isinstance(val, bool):
            lines.append(f"{key}={'true' if val else 'false'}")
        elif isinstance(val, float):
            lines.append(f"{key}={val!r}")
        else:
            lines.append(f"{key}={val}")
    return "\n".join(lines) + "\n"


def check_assumptions(gt: GroundTruth, gamma: Optional[float] = None,
                      c1: float = 1.0) -> AssumptionReport:
    """Measure incoherence, spectral norm, and Gram isometry of factors."""
    if gamma is None:
        gamma = default_gamma(gt.n)
    if not (gamma > 0 and c1 > 0):
        raise ValueError("gamma and c1 must be positive")
    n, r = gt.n, gt.r
    gram_hat = gt.U_hat.T @ gt.U_hat
    off = gram_hat - np.diag(np.diag(gram_hat))
    mu_hat = float(np.max(np.abs(off))) if r > 1 else 0.0
    gram_star = gt.U_star.T @ gt.U_star
    off_star = gram_star - np.diag(np.diag(gram_star))
    mu_star = float(np.max(np.abs(off_star))) if r > 1 else 0.0
    spec_norm = matrix_spectral_norm(gt.U_hat)
    gram_dev = matrix_spectral_norm(hadamard(gram_hat, gram_hat) - np.eye(r))
    mu_star_bound = gt.c_bar ** 2 * gamma / math.sqrt(n)
    return AssumptionReport(
        mu_hat=mu_hat,
        mu_star=mu_star,
        mu_star_bound=mu_star_bound,
        spec_norm=spec_norm,
        gram_dev=gram_dev,
        gamma=gamma,
        c1=c1,
        pass_incoherence=mu_hat <= gamma / math.sqrt(n),
        pass_spectrum=spec_norm <= 1.0 + c1 * math.sqrt(r / n),
        pass_gram_isometry=gram_dev <= gamma * math.sqrt(r) / n,
        pass_star_incoherence=mu_star <= mu_star_bound,
    )


def check_regularity(obj, gt: GroundTruth, U, eta: float) -> RegularityCertificate:
    """Evaluate the regularity inequality at ``U`` with stepsize ``eta``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    U = np.asarray(U, dtype=np.float64)
    G = grad_U(obj, U)
    d_val, perm = dist(U, gt.U_star)
    H = U - gt.U_star[:, perm]
    lhs = float(np.sum(G * H))
    rhs = 0.5 * eta * float(np.sum(G * G)) + 0.13 * obj.m * gt.c_under ** 4 * d_val ** 2
    eta_bound = adaptive_stepsize(obj, U, safety=1.0, eta_max=np.inf)
    return RegularityCertificate(
        lhs=lhs,
        rhs=rhs,
        margin=lhs - rhs,
        eta=float(eta),
        eta_bound=float(eta_bound),
        eta_ok=bool(eta <= eta_bound * (1.0 + 1e-12)),
        dist_value=d_val,
    )


def check_sandwich(gt: GroundTruth, U) -> SandwichReport:
    """Compare the tensor residual against the matched factor distance."""
    U = np.asarray(U, dtype=np.float64)
    d_val, _ = dist(U, gt.U_star)
    radius = 0.07 * gt.c_under / gt.omega ** 3
    resid = fro_norm(build_from_factors(U) - build_from_factors(gt.U_star))
    resid_sq = resid ** 2
    h_sq = d_val ** 2
    lower = 1.679 * gt.c_under ** 4 * h_sq
    upper = 10.336 * gt.omega ** 4 * gt.c_under ** 4 * h_sq
    if h_sq == 0.0:
        return SandwichReport(
            lower_ok=resid_sq == 0.0,
            upper_ok=resid_sq == 0.0,
            ratio=float("nan"),
            h_norm=0.0,
            resid_norm=resid,
            in_radius=True,
        )
    return SandwichReport(
        lower_ok=bool(lower <= resid_sq * (1.0 + 1e-12) + 1e-15),
        upper_ok=bool(resid_sq <= upper * (1.0 + 1e-12) + 1e-15),
        ratio=resid_sq / h_sq,
        h_norm=d_val,
        resid_norm=resid,
        in_radius=bool(d_val <= radius * (1.0 + 1e-12)),
    )


def check_hadamard_gram_bounds(gt: GroundTruth,
                               gamma: Optional[float] = None) -> HadamardGramReport:
    """Eigenvalue bounds for the entrywise square of the factor Gram matrix."""
    if gamma is None:
        gamma = default_gamma(gt.n)
    gram = gt.U_star.T @ gt.U_star
    w, _ = symmetric_eigh(hadamard(gram, gram))
    lam_min = float(w[0])
    lam_max = float(w[-1])
    slack = gamma * math.sqrt(gt.r) / gt.n
    lower_bound = gt.c_under ** 4 * (1.0 - slack)
    upper_bound = gt.c_bar ** 4 * (1.0 + slack)
    ok = bool(lower_bound <= lam_min + 1e-12 and lam_max <= upper_bound + 1e-12)
    return HadamardGramReport(
        lam_min=lam_min,
        lam_max=lam_max,
        lower_bound=lower_bound,
        upper_bound=upper_bound,
        ok=ok,
    )
