"""Optimized linear imputation by block coordinate descent.

The imputed matrix ``Z = X + M`` is scored by how well every feature is
reproduced by a linear regression on all the other features::

    L(A, M) = ||Z A - Z||_F^2

``X`` is the ``N x (d+1)`` design matrix (missing cells zeroed, constant
last column), ``M`` holds the imputations (non-zero only at missing cells)
and column ``i`` of ``A`` holds the regression coefficients for feature
``i`` (zero on the diagonal, identity on the intercept column).

:func:`fit` alternates exact minimization over ``A`` (ordinary or ridge
least squares per feature) and over ``M`` (a restricted linear system, or
gradient descent with backtracking). Both half-steps minimize the same
objective, so the recorded trace never increases.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .baseline import column_statistic
from .dataset import DataError
from .linalg import SingularMatrixError, solve_linear_system, solve_normal_equations

logger = logging.getLogger(__name__)

INIT_METHODS = ("median", "mean")
M_SOLVERS = ("closed_form", "gradient")
OUTPUT_VARIANTS = ("direct", "regressed")

# Armijo sufficient-decrease constant for the inner gradient loop.
ARMIJO_C = 1e-4


class OliSingularError(SingularMatrixError):
    """A per-feature regression has a singular Gram matrix."""

    def __init__(self, feature, message=None):
        self.feature = feature
        super().__init__(
            message
            or f"regression for feature {feature} is singular; use a ridge weight lambda > 0"
        )


@dataclass(frozen=True)
class OliConfig:
    init_method: str = "median"
    m_solver: str = "closed_form"
    step_alpha: float = 0.1
    tol_outer: float = 1e-8
    tol_inner: float = 1e-8
    max_outer: int = 100
    max_inner: int = 1000
    lam: float = 0.0
    output_variant: str = "direct"

    def __post_init__(self):
        if self.init_method not in INIT_METHODS:
            raise ValueError(f"init_method must be one of {INIT_METHODS}, got {self.init_method!r}")
        if self.m_solver not in M_SOLVERS:
            raise ValueError(f"m_solver must be one of {M_SOLVERS}, got {self.m_solver!r}")
        if self.output_variant not in OUTPUT_VARIANTS:
            raise ValueError(
                f"output_variant must be one of {OUTPUT_VARIANTS}, got {self.output_variant!r}"
            )
        if self.step_alpha <= 0 or self.tol_outer <= 0 or self.tol_inner <= 0:
            raise ValueError("step_alpha and tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit`.

    ``objective_trace`` holds one value per half-step (after each A-update
    and after each M-update).
    """

    A: np.ndarray
    M: np.ndarray
    X: np.ndarray
    mask: np.ndarray
    objective_trace: tuple
    outer_iterations: int
    converged: bool
    solver_fallbacks: int = 0

    def imputed(self, variant="direct"):
        return imputed_data(self.X, self.M, self.A, variant, self.mask)

    def imputations(self, variant="direct"):
        """``(row, col, value)`` for each missing cell."""
        full = self.imputed(variant)
        rows, cols = np.nonzero(self.mask)
        return list(zip(rows.tolist(), cols.tolist(), full[rows, cols].tolist()))


def build_design(ds):
    """``N x (d+1)`` design matrix: observed values, zeros at missing cells, a column of ones."""
    n = ds.shape[0]
    return np.hstack([np.where(ds.mask, 0.0, ds.values), np.ones((n, 1))])


def _full_mask(mask, n_cols):
    """Pad an ``N x d`` mask with a False intercept column."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[1] == n_cols:
        return mask
    return np.hstack([mask, np.zeros((mask.shape[0], 1), dtype=bool)])


def identity_coefficients(d):
    """Feasible starting ``A``: all-zero regressions, identity on the intercept column."""
    A = np.zeros((d + 1, d + 1))
    A[d, d] = 1.0
    return A


def ridge_term(A, lam):
    """``lam`` times the squared non-intercept coefficients of every regression."""
    if lam == 0:
        return 0.0
    d = A.shape[0] - 1
    return float(lam * np.sum(A[:d, :d] ** 2))


def objective(X, M, A, lam=0.0):
    """``||(X+M)A - (X+M)||_F^2``, plus the ridge term when ``lam > 0``."""
    Z = X + M
    R = Z @ A - Z
    return float(np.sum(R * R)) + ridge_term(A, lam)


def update_A(X, M, lam=0.0):
    """Regress every feature of ``X + M`` on all the others plus an intercept.

    Returns the coefficient matrix ``A``. With ``lam > 0`` the slopes (not
    the intercept) carry a ridge penalty.

    Raises
    ------
    OliSingularError
        If a regression is singular and ``lam == 0``.
    """
    Z = X + M
    d = Z.shape[1] - 1
    G = Z.T @ Z
    # row i lists the regressors of feature i; the intercept is always last
    others = np.array([np.r_[0:i, i + 1:d + 1] for i in range(d)])
    features = np.arange(d)[:, None]
    try:
        beta = solve_normal_equations(
            G[others[:, :, None], others[:, None, :]], G[others, features], lam, intercept=d - 1
        )
    except SingularMatrixError as exc:
        raise OliSingularError(int(exc.index[0])) from None
    A = identity_coefficients(d)
    A[others, features] = beta
    return A


def gradient_M(X, M, A, mask):
    """Gradient of the objective with respect to the imputations.

    ``2 [(X+M)A - (X+M)] (A-I)^T`` with every entry that is not a free
    variable (observed cells, the intercept column) set to zero.
    """
    B = A - np.eye(A.shape[0])
    G = 2.0 * ((X + M) @ B) @ B.T
    return G * _full_mask(mask, X.shape[1])


DENSE_SYSTEM_MAX = 512


class _RowBlockOperator:
    """Block-diagonal restricted matrix applied through the row layout."""

    def __init__(self, P, rows, cols):
        unique_rows, self.slot = np.unique(rows, return_inverse=True)
        self.cols = cols
        self.P = P
        self.V = np.zeros((unique_rows.size, P.shape[0]))

    def __matmul__(self, v):
        self.V[self.slot, self.cols] = v
        return (self.V @ self.P)[self.slot, self.cols]


def _restricted_operator(X, A, full):
    """``(K, q)`` for the restricted system over the missing cells.

    The gradient at imputations ``m`` (missing cells in row-major order) is
    ``2 (K @ m - q)``. ``K`` is block diagonal by row; it is formed densely
    when small and applied through the row layout otherwise.
    """
    rows, cols = np.nonzero(full)
    B = A - np.eye(A.shape[0])
    P = B @ B.T
    q = -np.einsum("ij,ji->i", X[rows], P[:, cols])
    if rows.size <= DENSE_SYSTEM_MAX:
        K = np.where(rows[:, None] == rows[None, :], P[cols[:, None], cols[None, :]], 0.0)
        return K, q
    return _RowBlockOperator(P, rows, cols), q


def update_M_gradient(X, M, A, mask, cfg=None):
    """Minimize the objective over ``M`` by gradient descent.

    The first trial step is ``cfg.step_alpha``; later trial steps are the
    Barzilai-Borwein estimate ``<s, s> / <s, y>`` from the previous step.
    Each trial is halved until the Armijo condition holds, so the objective
    decreases at every accepted step. Stops when the largest gradient entry
    is at most ``cfg.tol_inner`` or after ``cfg.max_inner`` steps.
    """
    cfg = cfg or OliConfig()
    full = _full_mask(mask, X.shape[1])
    M = np.where(full, M, 0.0)
    if not full.any():
        return M
    # Work on the vector m of free cells only: the gradient is 2 (K m - q)
    # and a step s changes it by 2 K s, so each iteration needs one K product.
    K, q = _restricted_operator(X, A, full)
    m = M[full]
    g = 2.0 * (K @ m - q)
    # |g|_max <= tol needs |g|_2^2 <= k tol^2, so the max is checked only then
    bound = m.size * cfg.tol_inner ** 2
    alpha = cfg.step_alpha
    for it in range(cfg.max_inner):
        g2 = float(g @ g)
        if g2 <= bound and np.abs(g).max() <= cfg.tol_inner:
            break
        Kg = K @ g
        # The change along -g is exactly -alpha*|g|^2 + alpha^2*|G B|^2 with
        # |G B|^2 = 2 g.K g; this form avoids cancellation between two large
        # objective values.
        curv = 2.0 * float(g @ Kg)
        if not (math.isfinite(g2) and math.isfinite(curv)):
            raise FloatingPointError("non-finite gradient in the M-update")
        while -alpha * g2 + alpha * alpha * curv > -ARMIJO_C * alpha * g2:
            alpha *= 0.5
            if alpha < 1e-300:
                M[full] = m
                return M
        m -= alpha * g
        if (it + 1) % 50 == 0:
            g = 2.0 * (K @ m - q)  # refresh to stop rounding drift
        else:
            g -= (2.0 * alpha) * Kg
        # Barzilai-Borwein: with s = -alpha g and y = 2 K s, <s, s> / <s, y>
        # reduces to |g|^2 / (2 g.K g).
        alpha = g2 / curv if curv > 0 else 2.0 * alpha
    M[full] = m
    if not np.isfinite(objective(X, M, A)):
        raise FloatingPointError("non-finite objective in the M-update")
    return M


def restricted_system(X, A, mask):
    """Assemble the dense stationarity system over all missing cells.

    Returns ``(K, rhs, rows, cols)``: unknown ``t`` is ``M[rows[t], cols[t]]``
    and ``K @ m = rhs`` states that the gradient vanishes at every missing
    cell. Unknowns from different rows are uncoupled, so ``K`` is block
    diagonal in row-major cell order.
    """
    B = A - np.eye(A.shape[0])
    P = B @ B.T
    Q = -X @ P
    rows, cols = np.nonzero(_full_mask(mask, X.shape[1]))
    k = len(rows)
    K = np.zeros((k, k))
    same_row = rows[:, None] == rows[None, :]
    # equation for cell (r, c): sum over missing c' in row r of M[r, c'] P[c', c]
    K[same_row] = P[cols[None, :], cols[:, None]][same_row]
    return K, Q[rows, cols], rows, cols


def update_M_closed_form(X, A, mask):
    """Exact minimizer of the objective over ``M`` for fixed ``A``.

    Rows of ``M`` are independent blocks of the restricted system; rows
    with the same number of missing cells are solved together as a stack.

    Raises
    ------
    SingularMatrixError
        If a block of the restricted system is singular.
    """
    full = _full_mask(mask, X.shape[1])
    M = np.zeros_like(X, dtype=float)
    counts = full.sum(axis=1)
    if not counts.any():
        return M
    B = A - np.eye(A.shape[0])
    P = B @ B.T
    Q = -(X @ P)
    for k in np.unique(counts[counts > 0]):
        rows = np.flatnonzero(counts == k)
        cols = np.nonzero(full[rows])[1].reshape(-1, k)
        blocks = P[cols[:, :, None], cols[:, None, :]]
        rhs = Q[rows[:, None], cols]
        M[rows[:, None], cols] = solve_linear_system(blocks, rhs)
    return M


def imputed_data(X, M, A, variant="direct", mask=None):
    """Completed ``N x d`` data.

    ``direct`` returns ``X + M``. ``regressed`` keeps observed cells and
    fills missing ones with the regression predictions ``(X + M) A``.
    """
    d = X.shape[1] - 1
    Z = X + M
    if variant == "direct":
        return Z[:, :d]
    if variant == "regressed":
        if mask is None:
            raise ValueError("the regressed variant needs the missingness mask")
        mask = np.asarray(mask, dtype=bool)[:, :d]
        return np.where(mask, (Z @ A)[:, :d], X[:, :d])
    raise ValueError(f"variant must be one of {OUTPUT_VARIANTS}, got {variant!r}")


def initial_M(ds, method="median"):
    X_shape = (ds.shape[0], ds.shape[1] + 1)
    M = np.zeros(X_shape)
    if ds.n_missing:
        stat = column_statistic(ds, method)
        rows, cols = ds.missing_cells()
        M[rows, cols] = stat[cols]
    return M


def solve_M(X, M, A, mask, cfg):
    """One M half-step with the configured solver.

    Returns ``(M, fell_back)``; a singular closed-form system falls back to
    gradient descent.
    """
    if cfg.m_solver == "gradient":
        return update_M_gradient(X, M, A, mask, cfg), False
    try:
        return update_M_closed_form(X, A, mask), False
    except SingularMatrixError as exc:
        logger.warning("closed-form M-update failed (%s); using gradient descent", exc)
        return update_M_gradient(X, M, A, mask, cfg), True


def _is_stationary(X, M, A, mask, cfg):
    G = gradient_M(X, M, A, mask)
    return np.max(np.abs(G)) <= max(cfg.tol_inner, 1e-6)


def fit(ds, cfg=None):
    """Impute ``ds`` by alternating coefficient and imputation updates.

    Parameters
    ----------
    ds : Dataset
    cfg : OliConfig, optional

    Returns
    -------
    FitResult
        Iteration stops once the relative objective change over an outer
        iteration is below ``cfg.tol_outer``. ``converged`` is True only if
        the imputations are then also stationary (largest restricted
        gradient entry at most ``max(cfg.tol_inner, 1e-6)``); it is False
        when the gradient solver stalls short of that or ``cfg.max_outer``
        iterations run out.

    Raises
    ------
    DataError
        If a column has fewer than two observed entries.
    OliSingularError
        If a regression is singular and ``cfg.lam == 0``.
    """
    cfg = cfg or OliConfig()
    n, d = ds.shape
    for j in np.flatnonzero(ds.observed_counts() < 2):
        raise DataError(f"column {ds.column_names[j]!r} has fewer than 2 observed entries")
    if n <= d + 1:
        warnings.warn(f"only {n} samples for {d} features; regressions are underdetermined",
                      stacklevel=2)
    X = build_design(ds)
    mask = _full_mask(ds.mask, d + 1)
    M = initial_M(ds, cfg.init_method)
    A = identity_coefficients(d)
    trace = []
    converged = False
    fallbacks = 0
    start = None
    t = 0
    for t in range(1, cfg.max_outer + 1):
        A = update_A(X, M, cfg.lam)
        trace.append(objective(X, M, A, cfg.lam))
        if start is None:
            start = trace[-1]
        if ds.n_missing:
            M, fell_back = solve_M(X, M, A, mask, cfg)
            fallbacks += fell_back
        trace.append(objective(X, M, A, cfg.lam))
        logger.debug("outer iteration %d: objective %.12g", t, trace[-1])
        if abs(start - trace[-1]) / (1.0 + abs(start)) < cfg.tol_outer:
            converged = bool(not ds.n_missing or _is_stationary(X, M, A, mask, cfg))
            if not converged:
                logger.info("objective settled but the imputations are not stationary; "
                            "stopping unconverged")
            break
        start = trace[-1]
    for arr in (A, M):
        arr.setflags(write=False)
    return FitResult(
        A=A,
        M=M,
        X=X,
        mask=mask,
        objective_trace=tuple(trace),
        outer_iterations=t,
        converged=converged,
        solver_fallbacks=fallbacks,
    )
