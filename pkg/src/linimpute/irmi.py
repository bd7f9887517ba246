"""Iterative regression imputation (IRMI), real-valued features only.

Start from median imputation, then sweep the features in ascending
order: regress feature ``i`` on all other (currently imputed) features
using only the rows where ``i`` is observed, and overwrite the missing
cells of ``i`` with the predictions. Unlike OLI this has no objective it
is guaranteed to decrease, so the sweep can diverge; divergence is
detected and reported instead of returning imputations.
"""

from dataclasses import dataclass, field

import numpy as np

from .baseline import column_statistic
from .dataset import DataError
from .linalg import SingularMatrixError, least_squares

CONVERGED = "converged"
ITERATION_CAP = "iteration_cap"
DIVERGED = "diverged"


class IrmiDivergedError(RuntimeError):
    """The IRMI sweep diverged and produced no imputations."""


class IrmiSingularError(SingularMatrixError):
    def __init__(self, feature):
        self.feature = feature
        super().__init__(f"IRMI regression for feature {feature} is singular")


@dataclass(frozen=True)
class IrmiConfig:
    max_iter: int = 50
    divergence_ratio: float = 6.0
    tol: float = 1e-6

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.divergence_ratio <= 0:
            raise ValueError("divergence_ratio must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class IrmiOutcome:
    """Result of :func:`fit_irmi`.

    ``imputations`` is ``None`` for diverged runs. ``change_trace[k]`` is
    the largest absolute change of an imputed value during sweep ``k``.
    """

    status: str
    imputations: list = None
    iterations: int = 0
    change_trace: tuple = field(default=())
    coefficients: np.ndarray = None

    @property
    def ok(self):
        return self.status != DIVERGED


def divergence_scale(ds):
    """Per-column reference magnitude: median absolute observed value.

    Falls back to the largest absolute observed value, then to 1, for
    columns whose median magnitude is 0.
    """
    scale = np.ones(ds.shape[1])
    for j in range(ds.shape[1]):
        col = np.abs(ds.values[~ds.mask[:, j], j])
        for candidate in (np.median(col), np.max(col)):
            if candidate > 0:
                scale[j] = candidate
                break
    return scale


def fit_irmi(ds, cfg=None):
    """Run the IRMI sweep on ``ds``.

    The sweep stops when no imputed value moves by more than ``cfg.tol``
    (converged), after ``cfg.max_iter`` sweeps (iteration cap), or when an
    imputed value becomes non-finite or exceeds ``10**divergence_ratio``
    times its column's reference magnitude (diverged).

    Raises
    ------
    IrmiSingularError
        When a per-feature regression is singular. This is an input problem,
        distinct from divergence.
    """
    cfg = cfg or IrmiConfig()
    n, d = ds.shape
    for j in np.flatnonzero(ds.observed_counts() < 2):
        raise DataError(f"column {ds.column_names[j]!r} has fewer than 2 observed entries")
    rows, cols = ds.missing_cells()
    coef = np.zeros((d + 1, d))
    if rows.size == 0:
        return IrmiOutcome(CONVERGED, [], 0, (), coef)

    Xt = np.hstack([ds.values, np.ones((n, 1))])
    Xt[rows, cols] = column_statistic(ds, "median")[cols]
    limit = 10.0 ** cfg.divergence_ratio * divergence_scale(ds)
    features = [j for j in range(d) if ds.mask[:, j].any()]
    trace = []
    status = ITERATION_CAP
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.max_iter):
            before = Xt[rows, cols].copy()
            for i in features:
                miss = ds.mask[:, i]
                others = np.r_[0:i, i + 1:d + 1]
                design = Xt[:, others]
                try:
                    beta = least_squares(design[~miss], Xt[~miss, i])
                except SingularMatrixError:
                    raise IrmiSingularError(i) from None
                except ValueError:
                    # Gram matrix overflowed: the sweep has already blown up
                    Xt[miss, i] = np.nan
                    break
                coef[others, i] = beta
                Xt[miss, i] = design[miss] @ beta
            current = Xt[rows, cols]
            change = float(np.max(np.abs(current - before)))
            trace.append(change)
            if not np.all(np.isfinite(current)) or np.any(np.abs(current) > limit[cols]):
                status = DIVERGED
                break
            if change < cfg.tol:
                status = CONVERGED
                break
    if status == DIVERGED:
        return IrmiOutcome(DIVERGED, None, len(trace), tuple(trace), None)
    # the method returns X~ - X; at missing cells X is 0, so that is X~ itself
    imputations = list(zip(rows.tolist(), cols.tolist(), Xt[rows, cols].tolist()))
    return IrmiOutcome(status, imputations, len(trace), tuple(trace), coef)
