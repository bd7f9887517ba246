"""Equicorrelated Gaussian data and the simulation sweeps built on it."""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .bench import labels_for, map_jobs, run_method, score_run
from .dataset import STREAM_DATA, Dataset, inject_missing, make_rng
from .linalg import SingularMatrixError, cholesky
from .oli import OliConfig

SIM_METHODS = ("oli", "irmi", "mi")

SCALES = {
    "desk": {"n": 2000, "repetitions": 5},
    "paper": {"n": 10000, "repetitions": 20},
}


@dataclass(frozen=True)
class SimSpec:
    n: int = 2000
    d: int = 5
    rho: float = 0.7
    missing_rate: float = 0.05
    repetitions: int = 5
    seed: int = 0
    mean: float = 1.0

    def __post_init__(self):
        if self.n < 2 or self.d < 1 or self.repetitions < 1:
            raise ValueError("need n >= 2, d >= 1 and repetitions >= 1")
        if self.d > 1 and not -1.0 / (self.d - 1) < self.rho < 1.0:
            raise ValueError(
                f"rho={self.rho} gives an indefinite covariance for d={self.d}; "
                f"need {-1.0 / (self.d - 1):.4g} < rho < 1"
            )

    def covariance(self):
        return np.full((self.d, self.d), self.rho) + (1.0 - self.rho) * np.eye(self.d)


def conditional_variance(d, rho):
    """Variance of one coordinate of a unit equicorrelated Gaussian given the other ``d-1``.

    This is the smallest MSE any imputation can reach for an isolated missing cell.
    """
    if d == 1:
        return 1.0
    return 1.0 - rho ** 2 * (d - 1) / (1.0 + (d - 2) * rho)


def mvn_equicorrelated(spec):
    """``spec.n`` draws from N(mean * 1, covariance), as a complete Dataset.

    Standard normals (numpy's ziggurat sampler on the PCG64 stream for
    ``spec.seed``) are mapped through the Cholesky factor of the covariance.
    """
    try:
        L = cholesky(spec.covariance())
    except SingularMatrixError as exc:
        raise ValueError(f"covariance for rho={spec.rho}, d={spec.d} is not positive definite") from exc
    Z = make_rng(spec.seed, STREAM_DATA).standard_normal((spec.n, spec.d))
    values = spec.mean + Z @ L.T
    return Dataset(values, np.zeros(values.shape, dtype=bool),
                   tuple(f"x{j}" for j in range(spec.d)))


def _sim_repetition(args):
    spec, sweep, value, rep, methods, oli_cfg = args
    rep_spec = dataclasses.replace(spec, seed=spec.seed + rep)
    ds = mvn_equicorrelated(rep_spec)
    masked, truth = inject_missing(ds, spec.missing_rate, rep_spec.seed)
    rows = []
    for method in methods:
        run = run_method(method, masked, oli_cfg)
        scores = score_run(run, truth)
        for label in labels_for(method, oli_cfg.output_variant):
            rows.append({
                "sweep": sweep,
                "value": value,
                "method": label,
                "repetition": rep,
                "mse": scores.get(label),
                "status": "ok" if run.converged else (run.note or "not converged"),
            })
    return rows


def _sweep(specs, sweep, methods, oli_cfg, jobs):
    oli_cfg = oli_cfg or OliConfig()
    tasks = [
        (spec, sweep, value, rep, tuple(methods), oli_cfg)
        for value, spec in specs
        for rep in range(spec.repetitions)
    ]
    rows = [r for chunk in map_jobs(_sim_repetition, tasks, jobs) for r in chunk]
    return sorted(rows, key=lambda r: (r["value"], r["method"], r["repetition"]))


def run_dimension_sweep(dims, rho=0.7, base=None, methods=SIM_METHODS, oli_cfg=None, jobs=1):
    """MSE per method and repetition as the number of features varies (rho fixed)."""
    base = base or SimSpec()
    specs = [(d, dataclasses.replace(base, d=d, rho=rho)) for d in dims]
    return _sweep(specs, "d", methods, oli_cfg, jobs)


def run_covariance_sweep(rhos, d=5, base=None, methods=SIM_METHODS, oli_cfg=None, jobs=1):
    """MSE per method and repetition as the common correlation varies (d fixed)."""
    base = base or SimSpec()
    specs = [(rho, dataclasses.replace(base, d=d, rho=rho)) for rho in rhos]
    return _sweep(specs, "rho", methods, oli_cfg, jobs)


def summarize(rows):
    """Aggregate sweep rows into ``{(value, method): (mean, std, n_ok, n_total)}``.

    Only converged repetitions (status ``ok``) enter the statistics.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r["value"], r["method"]), []).append(
            r["mse"] if r["status"] == "ok" else None
        )
    out = {}
    for key, vals in sorted(groups.items()):
        ok = [v for v in vals if v is not None]
        mean = float(np.mean(ok)) if ok else None
        std = float(np.std(ok, ddof=1)) if len(ok) > 1 else (0.0 if ok else None)
        out[key] = (mean, std, len(ok), len(vals))
    return out


@dataclass(frozen=True)
class PairwiseComparison:
    """Agreement between two methods over the same held-out cells."""

    first: str
    second: str
    value_r: float
    error_r: float
    mean_abs_deviation: float
    cells: np.ndarray  # columns: row, col, truth, first, second


def compare_methods_pairwise(ds, truth, first="oli", second="irmi", oli_cfg=None):
    """Correlate two methods' imputations (and signed errors ``truth - imputed``).

    Returns ``None`` when either method fails to return imputations.
    """
    imputed = {}
    for label in {first, second}:
        method = "oli" if label.startswith("oli") else label
        run = run_method(method, ds, oli_cfg)
        if run.imputations is None:
            return None
        imputed[label] = {(r, c): v for r, c, v in run.imputations[label]}
    cells = np.array([
        (r, c, t, imputed[first][(r, c)], imputed[second][(r, c)])
        for r, c, t in truth.cells()
    ]).reshape(-1, 5)
    a, b = cells[:, 3], cells[:, 4]
    err_a, err_b = cells[:, 2] - a, cells[:, 2] - b
    return PairwiseComparison(
        first,
        second,
        _pearson(a, b),
        _pearson(err_a, err_b),
        float(np.mean(np.abs(a - b))) if len(a) else float("nan"),
        cells,
    )


def _pearson(a, b):
    if len(a) < 2 or np.std(a) == 0 or np.std(b) == 0:
        return 1.0 if len(a) and np.array_equal(a, b) else float("nan")
    return float(np.corrcoef(a, b)[0, 1])
