"""Small dense linear algebra used throughout the package.

Matrices are plain 2-D ``numpy.ndarray`` objects of float64. The networks
handled here have tens of nodes, so everything is dense and direct.
"""

import numpy as np

from .errors import (
    DimensionMismatch,
    Disconnected,
    NonFiniteEntries,
    NotLaplacian,
    NotSymmetric,
    SingularMatrix,
)

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-10
EIGEN_CUTOFF = 1e-10


def as_matrix(a, name="matrix"):
    """Return ``a`` as a read-only float64 2-D array, rejecting NaN/inf."""
    m = np.array(a, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteEntries(f"{name} contains NaN or infinite entries")
    m.flags.writeable = False
    return m


def solve_linear(A, b):
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    A : (n, n) array_like
        Square, numerically nonsingular matrix.
    b : (n,) or (n, m) array_like
        Right-hand side; a matrix solves several systems at once.

    Returns
    -------
    numpy.ndarray
        Solution with the same shape as ``b``.

    Raises
    ------
    SingularMatrix
        If a pivot falls below ``1e-12`` times the largest entry of ``A``.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    b = np.array(b, dtype=float)
    vector = b.ndim == 1
    if b.shape[0] != n:
        raise DimensionMismatch(f"b has {b.shape[0]} rows, A has {n}")
    M = A.copy()
    X = b.reshape(n, -1).copy()

    scale = np.max(np.abs(M)) if n else 0.0
    if n and scale == 0.0:
        raise SingularMatrix("zero matrix")
    tol = PIVOT_TOL * scale

    for k in range(n):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if abs(M[p, k]) < tol:
            raise SingularMatrix(f"pivot {abs(M[p, k]):.3e} in column {k} below {tol:.3e}")
        if p != k:
            M[[k, p]] = M[[p, k]]
            X[[k, p]] = X[[p, k]]
        factors = M[k + 1:, k] / M[k, k]
        M[k + 1:, k:] -= np.outer(factors, M[k, k:])
        X[k + 1:] -= np.outer(factors, X[k])

    for k in range(n - 1, -1, -1):
        X[k] = (X[k] - M[k, k + 1:] @ X[k + 1:]) / M[k, k]

    return X[:, 0] if vector else X


def _check_symmetric(A, name):
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {A.shape}")
    if A.size and np.max(np.abs(A - A.T)) > SYMMETRY_TOL:
        raise NotSymmetric(f"{name} is not symmetric (max asymmetry {np.max(np.abs(A - A.T)):.3e})")
    return A


def pinv_symmetric(A):
    """Moore-Penrose pseudo-inverse of a symmetric matrix.

    Uses the eigendecomposition and discards eigenvalues below
    ``1e-10 * max|lambda|``.
    """
    A = _check_symmetric(A, "A")
    A = 0.5 * (A + A.T)
    vals, vecs = np.linalg.eigh(A)
    top = np.max(np.abs(vals)) if vals.size else 0.0
    if top == 0.0:
        return np.zeros_like(A)
    keep = np.abs(vals) > EIGEN_CUTOFF * top
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return (vecs * inv) @ vecs.T


def laplacian_pinv(L):
    """Pseudo-inverse of the Laplacian of a connected graph.

    Computed as ``(L + J/N)^-1 - J/N`` with ``J`` the all-ones matrix, which
    is exact when ``L`` has rank ``N - 1``.

    Raises
    ------
    Disconnected
        If ``L + J/N`` is numerically singular (graph not connected).
    """
    L = _check_symmetric(L, "L")
    n = L.shape[0]
    if n and np.max(np.abs(L.sum(axis=1))) > SYMMETRY_TOL * max(1.0, np.max(np.abs(L))):
        raise NotLaplacian("Laplacian rows must sum to zero")
    J = np.full((n, n), 1.0 / n)
    try:
        inv = solve_linear(L + J, np.eye(n))
    except SingularMatrix as exc:
        raise Disconnected(f"Laplacian has rank below N-1: {exc}") from exc
    out = inv - J
    return 0.5 * (out + out.T)


def resistance_distances(L):
    """Pairwise effective resistances ``L+_aa + L+_bb - 2 L+_ab``."""
    P = laplacian_pinv(L)
    d = np.diag(P)
    return d[:, None] + d[None, :] - 2.0 * P
