"""scikit-learn compatible imputers.

All three accept arrays with ``NaN`` marking missing values and return
completed arrays, so they drop into a ``Pipeline`` ahead of any model.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_missing_array, check_n_features
from .baseline import column_statistic
from .dataset import Dataset
from .irmi import DIVERGED, IrmiConfig, IrmiDivergedError, fit_irmi
from .linalg import SingularMatrixError
from .oli import (
    OliConfig,
    build_design,
    imputed_data,
    update_M_closed_form,
    update_M_gradient,
)
from .oli import fit as fit_oli


def _check_new_data(estimator, X):
    check_is_fitted(estimator)
    X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan", copy=True)
    check_n_features(estimator, X)
    return Dataset.from_array(X)


class OLIImputer(TransformerMixin, BaseEstimator):
    """Optimized linear imputation.

    Every feature is modelled as a linear regression on all the others.
    Imputations and regression coefficients are found together by block
    coordinate descent on the total squared regression error, which never
    increases from one step to the next.

    Parameters
    ----------
    init : {"median", "mean"}
        Starting values for the missing cells.
    solver : {"closed_form", "gradient"}
        How the imputations are updated for fixed coefficients.
    step_size : float
        Initial step of the gradient solver (backtracking adjusts it).
    tol : float
        Stop when the relative objective change over an outer iteration
        drops below this.
    inner_tol : float
        Gradient solver stops when the largest gradient entry is below this.
    max_iter, max_inner_iter : int
        Iteration caps for the outer loop and the gradient solver.
    ridge : float
        Ridge weight on the regression slopes (intercepts unpenalized).
    output : {"direct", "regressed"}
        ``direct`` returns the optimized imputations; ``regressed`` replaces
        them by the regression predictions at the solution.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features + 1, n_features + 1)
        Column ``i`` holds the regression of feature ``i`` on the others;
        the last row holds intercepts.
    objective_trace_ : tuple of float
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, init="median", solver="closed_form", step_size=0.1, tol=1e-8,
                 inner_tol=1e-8, max_iter=100, max_inner_iter=1000, ridge=0.0,
                 output="direct"):
        self.init = init
        self.solver = solver
        self.step_size = step_size
        self.tol = tol
        self.inner_tol = inner_tol
        self.max_iter = max_iter
        self.max_inner_iter = max_inner_iter
        self.ridge = ridge
        self.output = output

    def _config(self):
        return OliConfig(
            init_method=self.init,
            m_solver=self.solver,
            step_alpha=self.step_size,
            tol_outer=self.tol,
            tol_inner=self.inner_tol,
            max_outer=self.max_iter,
            max_inner=self.max_inner_iter,
            lam=self.ridge,
            output_variant=self.output,
        )

    def fit(self, X, y=None):
        ds = check_missing_array(X)
        cfg = self._config()
        res = fit_oli(ds, cfg)
        self.fit_result_ = res
        self.coef_ = res.A
        self.objective_trace_ = res.objective_trace
        self.n_iter_ = res.outer_iterations
        self.converged_ = res.converged
        self.statistics_ = column_statistic(ds, self.init)
        self.n_features_in_ = ds.shape[1]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).fit_result_.imputed(self.output)

    def transform(self, X):
        """Impute new rows using the fitted coefficients.

        The missing cells are set to the exact minimizer of the objective
        with the coefficients held fixed.
        """
        ds = _check_new_data(self, X)
        design = build_design(ds)
        try:
            M = update_M_closed_form(design, self.coef_, ds.mask)
        except SingularMatrixError:
            M0 = np.zeros_like(design)
            rows, cols = ds.missing_cells()
            M0[rows, cols] = self.statistics_[cols]
            M = update_M_gradient(design, M0, self.coef_, ds.mask, self._config())
        return imputed_data(design, M, self.coef_, self.output, ds.mask)


class IRMIImputer(TransformerMixin, BaseEstimator):
    """Iterative regression imputation, sweeping features in column order.

    Raises :class:`~linimpute.irmi.IrmiDivergedError` from ``fit`` when the
    sweep diverges.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features + 1, n_features)
        Last-sweep regression of each feature on the others (intercept in
        the last row). Columns of fully observed features are zero.
    status_ : str
    n_iter_ : int
    """

    def __init__(self, max_iter=50, divergence_ratio=6.0, tol=1e-6):
        self.max_iter = max_iter
        self.divergence_ratio = divergence_ratio
        self.tol = tol

    def fit(self, X, y=None):
        ds = check_missing_array(X)
        out = fit_irmi(ds, IrmiConfig(self.max_iter, self.divergence_ratio, self.tol))
        if out.status == DIVERGED:
            raise IrmiDivergedError(
                f"IRMI diverged after {out.iterations} sweeps "
                f"(imputed values grew beyond 1e{self.divergence_ratio:g} x column scale)"
            )
        self.status_ = out.status
        self.n_iter_ = out.iterations
        self.coef_ = out.coefficients
        self.statistics_ = column_statistic(ds, "median")
        self.n_features_in_ = ds.shape[1]
        self._train = ds.fill(out.imputations)
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X)._train.copy()

    def transform(self, X):
        """Impute new rows by sweeping the fitted regressions until the values settle."""
        ds = _check_new_data(self, X)
        n, d = ds.shape
        Z = np.hstack([ds.values, np.ones((n, 1))])
        rows, cols = ds.missing_cells()
        Z[rows, cols] = self.statistics_[cols]
        features = [j for j in range(d) if ds.mask[:, j].any()]
        for _ in range(self.max_iter):
            before = Z[rows, cols].copy()
            for i in features:
                miss = ds.mask[:, i]
                others = np.r_[0:i, i + 1:d + 1]
                Z[miss, i] = Z[np.ix_(miss, others)] @ self.coef_[others, i]
            if rows.size == 0 or np.max(np.abs(Z[rows, cols] - before)) < self.tol:
                break
        return Z[:, :d]


class BaselineImputer(TransformerMixin, BaseEstimator):
    """Fill each missing cell with its column's observed median or mean."""

    def __init__(self, strategy="median"):
        self.strategy = strategy

    def fit(self, X, y=None):
        ds = check_missing_array(X, min_observed=1)
        self.statistics_ = column_statistic(ds, self.strategy)
        self.n_features_in_ = ds.shape[1]
        return self

    def transform(self, X):
        ds = _check_new_data(self, X)
        out = ds.values.copy()
        rows, cols = ds.missing_cells()
        out[rows, cols] = self.statistics_[cols]
        return out
