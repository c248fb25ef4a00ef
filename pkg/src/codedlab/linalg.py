"""Dense matrix helpers: evaluation points, Vandermonde/Lagrange machinery,
block partitioning and a few spectral utilities.

Matrices are plain 2-D numpy arrays. Real inputs stay real; anything that
touches evaluation points is promoted to complex, and :func:`to_real` drops
imaginary parts that are pure rounding noise.
"""
from __future__ import annotations

import enum

import numpy as np
import scipy.linalg as sla

from .errors import (
    InvalidInputError,
    InvalidParameterError,
    RankDeficiencyError,
    SingularSystemError,
)

DEFAULT_RTOL = 1e-8


class Scheme(str, enum.Enum):
    """How a pair (A, B) is split into k blocks.

    INNER splits the shared dimension (columns of A, rows of B), so the
    product is a sum of k full-size block products. OUTER splits A by rows
    and B by columns, so each block product is one tile of C.
    """

    INNER = "inner"
    OUTER = "outer"


def as_matrix(M, name="matrix") -> np.ndarray:
    """Validate ``M`` as a finite 2-D array (1-D input becomes a column)."""
    arr = np.asarray(M)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype.kind not in "biufc":
        raise InvalidInputError(f"{name} must be numeric, got dtype {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if arr.dtype.kind in "biu":
        arr = arr.astype(float)
    return arr


def check_points(points, n=None) -> np.ndarray:
    """Validate evaluation points: distinct, nonzero, optionally exactly n."""
    pts = np.asarray(points, dtype=complex).ravel()
    if n is not None and pts.size != n:
        raise InvalidParameterError(f"expected {n} evaluation points, got {pts.size}")
    if pts.size == 0:
        raise InvalidParameterError("need at least one evaluation point")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("evaluation points must be finite")
    if np.any(pts == 0):
        raise InvalidParameterError("evaluation points must be nonzero")
    if _has_duplicates(pts):
        raise SingularSystemError("evaluation points must be pairwise distinct")
    return pts


def _has_duplicates(pts) -> bool:
    diff = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(diff, np.inf)
    return bool(np.any(diff == 0))


def roots_of_unity(n: int) -> np.ndarray:
    """exp(2*pi*i*j/n) for j = 1..n; the last point is always 1."""
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n}")
    j = np.arange(1, n + 1)
    pts = np.exp(2j * np.pi * j / n)
    # snap the obvious lattice points so n=2, 4 give exact +-1, +-i
    pts.real[np.abs(pts.real) < 1e-15] = 0.0
    pts.imag[np.abs(pts.imag) < 1e-15] = 0.0
    return pts


def vandermonde(points, k: int) -> np.ndarray:
    """n x k matrix with entry (i, j) = points[i] ** j (increasing powers)."""
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    pts = np.asarray(points, dtype=complex).ravel()
    return np.vander(pts, k, increasing=True)


def _lu_solve(V, rhs, trans=0):
    with np.errstate(all="ignore"):
        lu, piv = sla.lu_factor(V, check_finite=False)
    if np.any(np.abs(np.diag(lu)) == 0) or not np.all(np.isfinite(lu)):
        raise SingularSystemError("Vandermonde system is singular")
    return sla.lu_solve((lu, piv), rhs, trans=trans, check_finite=False)


def decoding_row(points) -> np.ndarray:
    """Left multiplier a with a^T V = e_1^T for the square Vandermonde on ``points``.

    Equivalently the first row of V^{-1}. Applied to evaluations of a
    polynomial it returns the polynomial's constant coefficient.
    """
    pts = check_points(points)
    V = vandermonde(pts, pts.size)
    e1 = np.zeros(pts.size, dtype=complex)
    e1[0] = 1.0
    # a^T V = e1^T  <=>  V^T a = e1
    return _lu_solve(V, e1, trans=1)


def lagrange_interpolate(points, values) -> list[np.ndarray]:
    """Coefficients c_0..c_{m-1} of the matrix polynomial through (points, values)."""
    pts = check_points(points)
    vals = [np.asarray(v) for v in values]
    if len(vals) != pts.size:
        raise InvalidInputError(f"{pts.size} points but {len(vals)} values")
    shape = vals[0].shape
    if any(v.shape != shape for v in vals):
        raise InvalidInputError("all sample matrices must share one shape")
    V = vandermonde(pts, pts.size)
    rhs = np.stack([v.reshape(-1) for v in vals]).astype(complex)
    coeffs = _lu_solve(V, rhs)
    return [c.reshape(shape) for c in coeffs]


def evaluate_poly(coeffs, x):
    """Evaluate sum_j coeffs[j] * x**j for matrix coefficients (Horner)."""
    acc = np.zeros_like(np.asarray(coeffs[-1]), dtype=complex)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def partition(M, k: int, axis: str) -> list[np.ndarray]:
    """Split ``M`` into k equal blocks along ``axis`` ("rows" or "cols")."""
    M = as_matrix(M)
    if axis not in ("rows", "cols"):
        raise InvalidParameterError(f"axis must be 'rows' or 'cols', got {axis!r}")
    if int(k) != k or k < 1:
        raise InvalidParameterError(f"k must be a positive integer, got {k}")
    dim = M.shape[0] if axis == "rows" else M.shape[1]
    if dim % k:
        raise InvalidParameterError(f"k={k} does not divide the {axis} dimension {dim}")
    return np.split(M, k, axis=0 if axis == "rows" else 1)


def partition_pair(A, B, k: int, scheme) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Split a product pair: INNER gives A column / B row blocks, OUTER the reverse."""
    scheme = Scheme(scheme)
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise InvalidInputError(f"inner dimensions differ: {A.shape} @ {B.shape}")
    if scheme is Scheme.INNER:
        return partition(A, k, "cols"), partition(B, k, "rows")
    return partition(A, k, "rows"), partition(B, k, "cols")


def reassemble(blocks, axis: str) -> np.ndarray:
    return np.concatenate(blocks, axis=0 if axis == "rows" else 1)


def to_real(M, tol=DEFAULT_RTOL):
    """Drop imaginary parts that are rounding noise relative to ``M``'s scale."""
    M = np.asarray(M)
    if not np.iscomplexobj(M):
        return M
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if np.max(np.abs(M.imag), initial=0.0) <= tol * scale:
        return M.real.copy()
    return M


def spectral_norm(M) -> float:
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def orthonormal_basis(M, rtol=1e-10) -> np.ndarray:
    """Orthonormal basis of col(M); raises when M is rank deficient."""
    M = as_matrix(M)
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    if sv.size == 0 or sv[-1] <= rtol * max(sv[0], np.finfo(float).tiny) or M.shape[0] < M.shape[1]:
        raise RankDeficiencyError(f"matrix of shape {M.shape} is not full column rank")
    return U


def pseudoinverse(M) -> np.ndarray:
    return np.linalg.pinv(as_matrix(M))


def sym_eigenvalues(M) -> np.ndarray:
    """Eigenvalues of a real symmetric / Hermitian matrix, largest first."""
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"eigenvalues need a square matrix, got {M.shape}")
    if not np.allclose(M, M.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max(initial=0))):
        raise InvalidInputError("matrix is not symmetric/Hermitian")
    return np.linalg.eigvalsh(M)[::-1]
