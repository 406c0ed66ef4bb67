"""Factored gradient descent, landscape analysis, and deflation for
symmetric third-order tensors.

Subpackages
-----------
tensor_core
    Dense symmetric tensor arithmetic, unfoldings, and norm estimators.
factored_objective
    Loss functions on tensors and their factored gradients.
gd_solver
    Factored gradient descent with stepsize rules and run traces.
assumption_verifier
    Empirical checks of the local-convergence inequalities.
rank1_landscape
    Critical-point enumeration and classification for the best rank-one
    problem on orthogonally decomposable tensors.
deflation_decomposer
    Successive rank-one extraction of a full symmetric decomposition.
experiment_harness
    Seeded convergence-curve and success-rate experiments with CSV output.
"""

from .tensor_core import (
    SymTensor3,
    build_from_factors,
    fro_norm,
    inner,
    khatri_rao,
    matricize1,
    outer3,
    refold1,
)

__version__ = "0.1.0"

__all__ = [
    "SymTensor3",
    "build_from_factors",
    "fro_norm",
    "inner",
    "khatri_rao",
    "matricize1",
    "outer3",
    "refold1",
    "__version__",
]
