"""Small dense linear-algebra kernel.

Everything here works on plain ``numpy`` arrays. The routines are written
out by hand (rather than calling LAPACK) so that the failure behaviour is
deterministic: a pivot whose magnitude drops below
``PIVOT_RTOL * max|A|`` is reported as singular instead of producing
garbage coefficients.
"""

import numpy as np

PIVOT_RTOL = 1e-12
SYMMETRY_ATOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a factorization or solve meets a (numerically) zero pivot.

    ``index`` is the batch index of the first failing matrix when a stack
    of matrices was passed, else ``None``.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def _as_square(A, name="A"):
    """``A`` as a float array of shape ``(..., k, k)`` with ``k >= 1``."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"{name} must be a square matrix (or a stack of them), got shape {A.shape}")
    if A.shape[-1] == 0:
        raise ValueError(f"{name} must be at least 1x1")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def _first_failure(bad, batch_shape):
    flat = int(np.flatnonzero(bad.ravel())[0])
    return np.unravel_index(flat, batch_shape) if batch_shape else None


def _pivot_threshold(A):
    return PIVOT_RTOL * np.maximum(np.abs(A).max(axis=(-2, -1)), np.finfo(float).tiny)


def cholesky(S):
    """Lower-triangular Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    S : (..., k, k) array_like
        Symmetric within ``1e-10``. A stack of matrices is factored
        elementwise.

    Returns
    -------
    L : (..., k, k) ndarray
        Lower triangular with positive diagonal, ``L @ L.T == S``.

    Raises
    ------
    ValueError
        If ``S`` is not square or not symmetric.
    SingularMatrixError
        If ``S`` is not (numerically) positive definite.
    """
    S = _as_square(S, "S")
    if np.max(np.abs(S - np.swapaxes(S, -1, -2))) > SYMMETRY_ATOL:
        raise ValueError("S is not symmetric")
    k = S.shape[-1]
    threshold = _pivot_threshold(S)
    L = np.zeros_like(S)
    for j in range(k):
        row = L[..., j, :j]
        pivot = S[..., j, j] - np.sum(row * row, axis=-1)
        bad = pivot <= threshold
        if np.any(bad):
            index = _first_failure(bad, S.shape[:-2])
            value = pivot[index] if index is not None else pivot
            raise SingularMatrixError(
                f"matrix is not positive definite (pivot {float(value):.3g} at index {j})",
                index,
            )
        diag = np.sqrt(pivot)
        L[..., j, j] = diag
        below = S[..., j + 1:, j] - (L[..., j + 1:, :j] @ row[..., None])[..., 0]
        L[..., j + 1:, j] = below / diag[..., None]
    return L


def _forward_substitution(L, b):
    # b has shape (..., k, r)
    x = np.array(b, dtype=float, copy=True)
    for i in range(L.shape[-1]):
        x[..., i, :] = (x[..., i, :] - (L[..., i:i + 1, :i] @ x[..., :i, :])[..., 0, :]) \
            / L[..., i, i][..., None]
    return x


def _back_substitution(U, b):
    # b has shape (..., k, r)
    x = np.array(b, dtype=float, copy=True)
    for i in range(U.shape[-1] - 1, -1, -1):
        x[..., i, :] = (x[..., i, :] - (U[..., i:i + 1, i + 1:] @ x[..., i + 1:, :])[..., 0, :]) \
            / U[..., i, i][..., None]
    return x


def _as_columns(L, b):
    """Right-hand side as ``(..., k, r)`` plus whether it was a vector per matrix."""
    b = np.asarray(b, dtype=float)
    vector = b.ndim == L.ndim - 1
    if b.shape[L.ndim - 2] != L.shape[-1]:
        raise ValueError(f"b has {b.shape[L.ndim - 2]} rows, expected {L.shape[-1]}")
    return (b[..., None] if vector else b), vector


def cho_solve(L, b):
    """Solve ``(L L^T) x = b`` given the Cholesky factor ``L``."""
    rhs, vector = _as_columns(L, b)
    x = _back_substitution(np.swapaxes(L, -1, -2), _forward_substitution(L, rhs))
    return x[..., 0] if vector else x


def ridge_penalty(p, lam, intercept=None):
    """Diagonal ridge matrix ``lam * I`` with the ``intercept`` entry left at 0."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    D = np.full(p, float(lam))
    if intercept is not None:
        D[intercept] = 0.0
    return np.diag(D)


def solve_normal_equations(G, c, lam=0.0, intercept=None):
    """Solve ``(G + lam * D) beta = c`` where ``G`` is a Gram matrix ``X^T X``.

    ``D`` is the identity with the ``intercept`` coordinate unpenalized.
    Used directly when the Gram matrix is already available, which lets a
    caller share one ``X^T X`` between several regressions. A stack of
    Gram matrices ``(..., p, p)`` with right-hand sides ``(..., p)`` is
    solved elementwise.
    """
    G = np.asarray(G, dtype=float)
    H = G + ridge_penalty(G.shape[-1], lam, intercept)
    try:
        L = cholesky(H)
    except SingularMatrixError as exc:
        if lam == 0:
            raise SingularMatrixError(
                "X^T X is singular; use a ridge weight lambda > 0", exc.index
            ) from exc
        raise
    return cho_solve(L, np.asarray(c, dtype=float))


def least_squares(X, y, lam=0.0, intercept=None):
    """Ridge-regularized linear least squares.

    Minimizes ``||X beta - y||^2 + lam * ||beta_j||^2`` summed over every
    coordinate ``j`` except ``intercept``.

    Parameters
    ----------
    X : (n, p) array_like
    y : (n,) array_like
    lam : float, default 0
        Ridge weight. With ``lam == 0`` this is ordinary least squares.
    intercept : int or None
        Column of ``X`` excluded from the penalty (typically the constant
        column). ``None`` penalizes every coefficient.

    Returns
    -------
    beta : (p,) ndarray

    Raises
    ------
    SingularMatrixError
        If the (regularized) normal matrix is not positive definite.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"X must be a non-empty 2-D array, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y must have shape ({X.shape[0]},), got {y.shape}")
    return solve_normal_equations(X.T @ X, X.T @ y, lam, intercept)


def solve_linear_system(A, b):
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    ``A`` may be a stack ``(..., k, k)`` of systems solved independently.
    ``b`` holds one right-hand side per system, ``(..., k)``, or several,
    ``(..., k, r)``, sharing the factorization.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``1e-12 * max|A|`` (per system).
    """
    A = _as_square(A)
    rhs, vector = _as_columns(A, b)
    batch, k = A.shape[:-2], A.shape[-1]
    U = A.reshape(-1, k, k).copy()
    rhs = np.broadcast_to(rhs, batch + rhs.shape[-2:]).reshape(-1, k, rhs.shape[-1]).copy()
    threshold = _pivot_threshold(U)
    idx = np.arange(U.shape[0])
    for j in range(k):
        p = j + np.argmax(np.abs(U[:, j:, j]), axis=1)
        bad = np.abs(U[idx, p, j]) <= threshold
        if np.any(bad):
            raise SingularMatrixError(
                f"matrix is singular (pivot at column {j})", _first_failure(bad, batch)
            )
        swap = p != j
        if np.any(swap):
            s, ps = idx[swap], p[swap]
            U[s, j], U[s, ps] = U[s, ps], U[s, j].copy()
            rhs[s, j], rhs[s, ps] = rhs[s, ps], rhs[s, j].copy()
        factors = U[:, j + 1:, j] / U[:, j, j][:, None]
        U[:, j + 1:, j:] -= factors[:, :, None] * U[:, None, j, j:]
        rhs[:, j + 1:] -= factors[:, :, None] * rhs[:, None, j]
    x = _back_substitution(U, rhs).reshape(batch + (k, -1))
    return x[..., 0] if vector else x
