"""Dense symmetric third-order tensor arithmetic and norm estimators.

Conventions used throughout the package
---------------------------------------
* A third-order tensor ``T`` lives in R^{n x n x n} and is stored as a
  float64 ndarray of shape ``(n, n, n)``.  The linear layout used by file
  formats and by the mode-1 unfolding is *first index fastest*: entry
  ``(i, j, k)`` sits at flat position ``i + j*n + k*n**2`` (Fortran order
  of the index triple).
* The mode-1 unfolding ``matricize1`` maps ``T`` to an ``n x n^2`` matrix
  whose column ``c = j + k*n`` (0-based) holds the fiber ``T[:, j, k]``.
* The Khatri-Rao product follows the same fast-index rule, so that
  ``matricize1(build_from_factors(U)) == U @ khatri_rao(U, U).T`` up to
  roundoff.  For the symmetric product ``U (*) U`` the two possible
  stacking orders coincide.
* Factor matrices are plain float64 ndarrays of shape ``(n, r)`` whose
  columns are the factors ``u_p``.

Symmetry is maintained *bit-exactly* for tensors produced by ``outer3``
and ``build_from_factors``: every entry takes the value computed at the
sorted index triple, so permuting ``(i, j, k)`` reads the same memory
value.  Tensors supplied from outside are averaged over all six index
permutations and re-canonicalized; asymmetry beyond a small tolerance is
rejected.
"""

from __future__ import annotations

import warnings

import numpy as np

__all__ = [
    "SymTensor3",
    "FactorMatrix",
    "as_factor_matrix",
    "outer3",
    "build_from_factors",
    "inner",
    "fro_norm",
    "matricize1",
    "refold1",
    "khatri_rao",
    "matrix_spectral_norm",
    "tensor_op_norm_estimate",
    "two_to_p_norm_estimate",
    "hadamard",
    "contract12",
    "symmetric_eigh",
]

# A factor matrix is an (n, r) float64 array; kept as a documented alias so
# signatures stay readable without wrapping every array in a class.
FactorMatrix = np.ndarray

# Tolerance for accepting a user-supplied tensor as "symmetric".
_ASYMMETRY_TOL = 1e-9

# Internal fixed seed for the deterministic power-iteration start vector.
_POWER_SEED = 0x5EEDBEEF

# Cache of canonical (sorted) index triples, keyed by n.
_CANON_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _canonical_indices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index arrays (I, J, K) with (I,J,K)[i,j,k] = sorted((i,j,k))."""
    cached = _CANON_CACHE.get(n)
    if cached is None:
        idx = np.indices((n, n, n)).reshape(3, -1)
        srt = np.sort(idx, axis=0)
        cached = tuple(a.reshape((n, n, n)) for a in srt)
        _CANON_CACHE[n] = cached
    return cached


def _canonicalize(arr: np.ndarray) -> np.ndarray:
    """Replace every entry by the value stored at its sorted index triple.

    The result is bit-exactly invariant under all 6 permutations of
    (i, j, k) because sorted indices are permutation invariant.
    """
    i, j, k = _canonical_indices(arr.shape[0])
    return arr[i, j, k]


class SymTensor3:
    """A dense symmetric third-order tensor.

    Parameters
    ----------
    data : array_like, shape (n, n, n)
        Tensor entries.  The array is validated for shape and finiteness,
        averaged over the six index permutations, and canonicalized so the
        stored entries are bit-exactly symmetric.  Asymmetry larger than
        ``1e-9 * max(1, max|data|)`` raises ``ValueError``.

    Notes
    -----
    Instances are immutable (the backing array is marked read-only) and
    safe to share across threads.  Internal constructors that already
    guarantee symmetry bypass the defensive averaging.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 3 or len(set(arr.shape)) != 1:
            raise ValueError(
                f"tensor data must be a cube (n, n, n); got shape {arr.shape}"
            )
        if arr.shape[0] == 0:
            raise ValueError("tensor dimension must be positive")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must all be finite")
        perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
        asym = max(np.max(np.abs(arr - arr.transpose(p))) for p in perms)
        scale = max(1.0, float(np.max(np.abs(arr)))) if arr.size else 1.0
        if asym > _ASYMMETRY_TOL * scale:
            raise ValueError(
                f"tensor is not symmetric: max permutation deviation {asym:.3e} "
                f"exceeds tolerance {_ASYMMETRY_TOL * scale:.3e}"
            )
        sym = arr
        for p in perms:
            sym = sym + arr.transpose(p)
        sym = sym / 6.0
        self.data = _canonicalize(sym)
        self.data.flags.writeable = False

    # ------------------------------------------------------------------
    # trusted construction path for internally generated symmetric data
    # ------------------------------------------------------------------
    @classmethod
    def _wrap(cls, data: np.ndarray) -> "SymTensor3":
        """Wrap an already bit-symmetric float64 cube without re-checking."""
        obj = object.__new__(cls)
        data.flags.writeable = False
        obj.data = data
        return obj

    @classmethod
    def zeros(cls, n: int) -> "SymTensor3":
        if n <= 0:
            raise ValueError("tensor dimension must be positive")
        return cls._wrap(np.zeros((n, n, n)))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    # entrywise linear arithmetic preserves bit-exact symmetry because the
    # same pair of values meets at every permuted position
    def __add__(self, other: "SymTensor3") -> "SymTensor3":
        self._check_same(other)
        return SymTensor3._wrap(self.data + other.data)

    def __sub__(self, other: "SymTensor3") -> "SymTensor3":
        self._check_same(other)
        return SymTensor3._wrap(self.data - other.data)

    def __mul__(self, scalar: float) -> "SymTensor3":
        return SymTensor3._wrap(self.data * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor3":
        return SymTensor3._wrap(-self.data)

    def _check_same(self, other: "SymTensor3") -> None:
        if not isinstance(other, SymTensor3):
            raise TypeError("expected a SymTensor3 operand")
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"SymTensor3(n={self.n})"


def as_factor_matrix(U, name: str = "U") -> np.ndarray:
    """Validate and convert a factor matrix to a float64 (n, r) array."""
    arr = np.asarray(U, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D factor matrix; got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


# ----------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------

def outer3(u) -> SymTensor3:
    """Rank-one symmetric tensor u (x) u (x) u.

    Parameters
    ----------
    u : array_like, shape (n,)

    Returns
    -------
    SymTensor3 with entries ``u_i * u_j * u_k``, bit-exactly symmetric.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.size == 0:
        raise ValueError("outer3 requires a vector of positive dimension")
    if not np.all(np.isfinite(u)):
        raise ValueError("outer3 requires finite entries")
    raw = (u[:, None, None] * u[None, :, None]) * u[None, None, :]
    return SymTensor3._wrap(_canonicalize(raw))


def build_from_factors(U) -> SymTensor3:
    """Group product of factor columns: sum_p u_p (x) u_p (x) u_p.

    Parameters
    ----------
    U : array_like, shape (n, r), r >= 1.

    Returns
    -------
    SymTensor3 equal to the sum of rank-one cubes of the columns.
    """
    U = as_factor_matrix(U)
    n = U.shape[0]
    kr = khatri_rao(U, U)
    raw = refold1_array(U @ kr.T, n)
    return SymTensor3._wrap(_canonicalize(raw))


# ----------------------------------------------------------------------
# inner products and unfoldings
# ----------------------------------------------------------------------

def inner(X: SymTensor3, Y: SymTensor3) -> float:
    """Entrywise inner product <X, Y> = sum X_ijk * Y_ijk."""
    X._check_same(Y)
    return float(np.dot(X.data.reshape(-1), Y.data.reshape(-1)))


def fro_norm(X: SymTensor3) -> float:
    """Frobenius norm of a tensor."""
    return float(np.linalg.norm(X.data.reshape(-1)))


def matricize1(T: SymTensor3) -> np.ndarray:
    """Mode-1 unfolding: column c = j + k*n holds the fiber T[:, j, k].

    Returns an ``n x n^2`` ndarray; the Frobenius norm is preserved
    exactly (same multiset of entries).
    """
    n = T.n
    return T.data.reshape((n, n * n), order="F")


def refold1_array(M, n: int) -> np.ndarray:
    """Inverse reshape of the mode-1 unfolding, returning a raw cube."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (n, n * n):
        raise ValueError(f"expected unfolding of shape ({n}, {n * n}); got {M.shape}")
    return M.reshape((n, n, n), order="F")


def refold1(M, n: int) -> SymTensor3:
    """Refold a mode-1 unfolding produced by :func:`matricize1`.

    The round trip ``refold1(matricize1(T), T.n)`` reproduces ``T``
    entrywise exactly.
    """
    return SymTensor3._wrap(refold1_array(M, n).copy())


def khatri_rao(A, B) -> np.ndarray:
    """Columnwise Kronecker product with the mode-1 fast-index convention.

    Column p of the result is the Kronecker product of columns ``a_p`` and
    ``b_p`` stacked so that row ``j + k*n_a`` carries ``A[j, p] * B[k, p]``
    (first factor's index fastest).  This is the stacking for which
    ``matricize1(build_from_factors(U)) == U @ khatri_rao(U, U).T``.
    """
    A = as_factor_matrix(A, "A")
    B = as_factor_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            f"column count mismatch: A has {A.shape[1]}, B has {B.shape[1]}"
        )
    na, r = A.shape
    nb = B.shape[0]
    prod = A[:, None, :] * B[None, :, :]  # (na, nb, r), index j fastest
    return prod.reshape((na * nb, r), order="F")


def hadamard(A, B) -> np.ndarray:
    """Entrywise (Hadamard) product of two equal-shape matrices."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return A * B


def contract12(T: SymTensor3, u, v) -> np.ndarray:
    """Contract the first two modes: w_k = sum_{i,j} T[i, j, k] u_i v_j."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.size != T.n or v.size != T.n:
        raise ValueError(
            f"contract12 dimension mismatch: tensor n={T.n}, u has {u.size}, v has {v.size}"
        )
    return np.einsum("ijk,i,j->k", T.data, u, v, optimize=True)


# ----------------------------------------------------------------------
# norm estimators
# ----------------------------------------------------------------------

def _power_top(A: np.ndarray, tol: float, max_iters: int,
               v0=None) -> tuple[float, np.ndarray, bool]:
    """Power iteration on the smaller Gram side of ``A``.

    Returns ``(sigma, x, converged)`` where ``sigma`` estimates the top
    singular value and ``x`` is the final unit iterate (living in the
    smaller of the row/column spaces), reusable as a warm start.
    """
    if A.shape[0] > A.shape[1]:
        A = A.T  # iterate on the smaller Gram side
    m = A.shape[0]
    x = None
    if v0 is not None:
        cand = np.asarray(v0, dtype=np.float64).reshape(-1)
        if cand.size == m and np.any(cand) and np.all(np.isfinite(cand)):
            x = cand / np.linalg.norm(cand)
    if x is None:
        rng = np.random.default_rng(_POWER_SEED)
        x = rng.standard_normal(m)
        x /= np.linalg.norm(x)

    lam_prev = -np.inf
    lam = 0.0
    for _ in range(max_iters):
        y = A @ (A.T @ x)
        lam = float(np.dot(x, y))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, x, True
        x = y / ny
        if abs(lam - lam_prev) <= tol * max(abs(lam), np.finfo(float).tiny):
            return float(np.sqrt(max(lam, 0.0))), x, True
        lam_prev = lam
    return float(np.sqrt(max(lam, 0.0))), x, False


def matrix_spectral_norm(A, tol: float = 1e-10, max_iters: int = 10000,
                         v0=None) -> float:
    """Largest singular value via power iteration on the Gram matrix.

    Iterates ``x <- G x`` with ``G`` the smaller of ``A A^T`` / ``A^T A``
    (applied implicitly as two matrix-vector products) from a
    deterministic seeded start vector, until the Rayleigh quotient is
    stationary to relative tolerance ``tol``.  Non-convergence within
    ``max_iters`` produces a ``RuntimeWarning`` and returns the best
    estimate found.

    Parameters
    ----------
    v0 : optional start vector (used to warm-start repeated calls on
        slowly varying matrices); defaults to a fixed-seed Gaussian.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"expected a matrix; got ndim={A.ndim}")
    if A.size == 0 or not np.any(A):
        return 0.0
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    sigma, _, converged = _power_top(A, tol, max_iters, v0)
    if not converged:
        warnings.warn(
            f"power iteration did not reach relative tolerance {tol:g} in "
            f"{max_iters} iterations; returning best estimate",
            RuntimeWarning,
            stacklevel=2,
        )
    return sigma


def tensor_op_norm_estimate(T: SymTensor3, restarts: int = 8, seed: int = 0,
                            max_iters: int = 500, tol: float = 1e-12) -> float:
    """Lower-bound estimate of the tensor operator norm max_{|xi|=1} T(xi,xi,xi).

    Runs symmetric higher-order power iteration ``xi <- T(., xi, xi)`` from
    ``restarts`` seeded random unit starts and returns the largest value of
    ``T(xi, xi, xi)`` observed at a unit vector.  Every reported value is a
    certified lower bound of the operator norm; the maximum itself is an
    estimate (the problem is NP-hard in general).
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    n = T.n
    best = 0.0
    for s in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s,)))
        xi = rng.standard_normal(n)
        nx = np.linalg.norm(xi)
        if nx == 0.0:
            continue
        xi /= nx
        prev = prev2 = -np.inf
        for _ in range(max_iters):
            val = float(contract12(T, xi, xi) @ xi)
            if val < 0.0:
                # odd order: flipping the sign of xi flips the value
                xi = -xi
                val = -val
            best = max(best, val)
            # stop at a fixed point or a period-2 oscillation of the value
            if (abs(val - prev) <= tol * max(1.0, abs(val))
                    or abs(val - prev2) <= tol * max(1.0, abs(val))):
                break
            prev2, prev = prev, val
            w = contract12(T, xi, xi)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            xi = w / nw
    return best


def two_to_p_norm_estimate(U, p: int, restarts: int = 8, seed: int = 0,
                           max_iters: int = 500, tol: float = 1e-12) -> float:
    """Lower-bound estimate of max_{|x|_2 = 1} ||U^T x||_p for p in {3, 4}.

    Nonlinear power iteration: x <- normalize(U psi_p(U^T x)) with
    psi_p(y) = |y|^{p-1} sign(y), from seeded random starts.  Diagnostic
    only; every reported value is attained at a unit vector and hence a
    valid lower bound.
    """
    if p not in (3, 4):
        raise ValueError("p must be 3 or 4")
    U = as_factor_matrix(U)
    n = U.shape[0]
    best = 0.0
    for s in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s,)))
        x = rng.standard_normal(n)
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        x /= nx
        prev = -np.inf
        for _ in range(max_iters):
            y = U.T @ x
            val = float(np.sum(np.abs(y) ** p) ** (1.0 / p))
            best = max(best, val)
            if abs(val - prev) <= tol * max(1.0, abs(val)):
                break
            prev = val
            g = U @ (np.abs(y) ** (p - 1) * np.sign(y))
            ng = np.linalg.norm(g)
            if ng == 0.0:
                break
            x = g / ng
    return best


# ----------------------------------------------------------------------
# symmetric eigensolver (cyclic Jacobi)
# ----------------------------------------------------------------------

def symmetric_eigh(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all off-diagonal pairs applying Givens rotations until the
    off-diagonal Frobenius norm falls below ``tol * max(1, ||A||_F)``.

    Returns
    -------
    (w, V) : eigenvalues in ascending order and the orthonormal
        eigenvector matrix with ``A @ V[:, i] = w[i] * V[:, i]``.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix; got shape {A.shape}")
    if not np.allclose(A, A.T, atol=1e-10 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    n = A.shape[0]
    B = 0.5 * (A + A.T)
    V = np.eye(n)
    if n == 1:
        return B.reshape(1).copy(), V
    scale = max(1.0, float(np.linalg.norm(B)))

    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(B * B) - np.sum(np.diag(B) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = B[p, q]
                if abs(apq) <= 1e-30 * scale:
                    continue
                theta = (B[q, q] - B[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * B[:, p] - s * B[:, q]
                rot_q = s * B[:, p] + c * B[:, q]
                B[:, p], B[:, q] = rot_p, rot_q
                rot_p = c * B[p, :] - s * B[q, :]
                rot_q = s * B[p, :] + c * B[q, :]
                B[p, :], B[q, :] = rot_p, rot_q
                B[p, q] = B[q, p] = 0.0
                rot_p = c * V[:, p] - s * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q
    w = np.diag(B).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]
