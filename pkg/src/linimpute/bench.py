"""Benchmark harness: mask a complete dataset, impute with several methods, score.

A repetition standardizes nothing by itself; :func:`run_benchmark` does
the full protocol (standardize, mask ``rate`` of the cells, impute with
every method, MSE against the held-out values) and aggregates over
repetitions. Per-repetition seeds are ``seed + repetition``.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .baseline import mean_impute, median_impute
from .dataset import PRNG_ID, DataError, inject_missing, mean_abs_correlation, mse, standardize
from .irmi import CONVERGED, IrmiConfig, fit_irmi
from .linalg import SingularMatrixError
from .oli import OliConfig
from .oli import fit as fit_oli

logger = logging.getLogger(__name__)

METHODS = ("oli", "irmi", "mi", "mean")


@dataclass
class MethodRun:
    """Outcome of one method on one masked dataset.

    ``imputations`` maps an output label to ``(row, col, value)`` triples;
    OLI contributes one label per output variant. ``None`` means the method
    returned nothing (IRMI divergence or a solver failure).
    """

    method: str
    imputations: dict = None
    converged: bool = False
    note: str = ""


def labels_for(method, variant="direct"):
    """Report labels a method produces: OLI yields its chosen variant plus the other one."""
    if method != "oli":
        return [method]
    other = "regressed" if variant == "direct" else "direct"
    return ["oli", f"oli_{other}"]


def run_method(method, ds, oli_cfg=None, irmi_cfg=None):
    """Impute ``ds`` with one named method, never raising on solver failure."""
    oli_cfg = oli_cfg or OliConfig()
    try:
        if method == "oli":
            res = fit_oli(ds, oli_cfg)
            (main, other) = labels_for("oli", oli_cfg.output_variant)
            other_variant = other.split("_", 1)[1]
            return MethodRun(
                method,
                {main: res.imputations(oli_cfg.output_variant),
                 other: res.imputations(other_variant)},
                res.converged,
                "" if res.converged else "iteration cap reached",
            )
        if method == "irmi":
            out = fit_irmi(ds, irmi_cfg)
            if not out.ok:
                return MethodRun(method, None, False, "diverged")
            return MethodRun(method, {"irmi": out.imputations}, out.status == CONVERGED,
                             "" if out.status == CONVERGED else out.status)
        if method == "mi":
            return MethodRun(method, {"mi": median_impute(ds)}, True)
        if method == "mean":
            return MethodRun(method, {"mean": mean_impute(ds)}, True)
    except (SingularMatrixError, FloatingPointError) as exc:
        logger.warning("%s failed: %s", method, exc)
        return MethodRun(method, None, False, f"failed: {exc}")
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def score_run(run, truth):
    """``{label: mse}`` for a method run; empty when the method returned nothing."""
    if run.imputations is None or len(truth) == 0:
        return {}
    return {label: mse(imp, truth) for label, imp in run.imputations.items()}


def _repetition(args):
    ds, methods, rate, seed, oli_cfg, irmi_cfg = args
    masked, truth = inject_missing(ds, rate, seed)
    out = []
    for method in methods:
        run = run_method(method, masked, oli_cfg, irmi_cfg)
        out.append((method, run.imputations is not None, run.converged,
                    score_run(run, truth), run.note))
    return out


def map_jobs(func, items, jobs=1):
    """Ordered map, in a process pool when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


@dataclass
class MethodSummary:
    label: str
    mses: list = field(default_factory=list)
    converged: int = 0
    completed: int = 0
    repetitions: int = 0
    notes: set = field(default_factory=set)

    @property
    def mean_mse(self):
        return float(np.mean(self.mses)) if self.mses else None

    @property
    def std_mse(self):
        # sample standard deviation over repetitions; 0 for a single run
        if not self.mses:
            return None
        return float(np.std(self.mses, ddof=1)) if len(self.mses) > 1 else 0.0


@dataclass
class BenchmarkReport:
    """Per-method aggregate over repetitions plus the metadata needed to rerun it.

    MSE statistics only cover repetitions that met the method's own
    convergence test (counted by ``converged``). ``completed`` counts runs
    that returned imputations at all, converged or not.
    """

    rows: list
    metadata: dict

    def row(self, label):
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def run_benchmark(ds, methods=("oli", "irmi", "mi"), rate=0.05, reps=10, seed=0,
                  oli_cfg=None, irmi_cfg=None, jobs=1, source=""):
    """Standardize a complete dataset, then repeat mask-impute-score ``reps`` times."""
    if ds.n_missing:
        raise DataError("benchmark input must be complete (no missing cells)")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    oli_cfg = oli_cfg or OliConfig()
    irmi_cfg = irmi_cfg or IrmiConfig()
    std_ds, _ = standardize(ds)
    jobs_args = [(std_ds, tuple(methods), rate, seed + r, oli_cfg, irmi_cfg) for r in range(reps)]
    results = map_jobs(_repetition, jobs_args, jobs)

    summaries = {}
    for m in methods:
        for label in labels_for(m, oli_cfg.output_variant):
            summaries[label] = MethodSummary(label)
    for rep in results:
        for method, completed, converged, scores, note in rep:
            for label in labels_for(method, oli_cfg.output_variant):
                s = summaries[label]
                s.repetitions += 1
                s.completed += completed
                s.converged += converged
                if converged and label in scores:
                    s.mses.append(scores[label])
                if note:
                    s.notes.add(note)
    n_cells = int(math.floor(rate * ds.shape[0] * ds.shape[1] + 0.5))
    if n_cells == 0:
        for s in summaries.values():
            s.notes.add("no held-out cells; MSE undefined")
    metadata = {
        "tool": "linimpute benchmark",
        "version": __version__,
        "input": source,
        "n_samples": ds.shape[0],
        "n_features": ds.shape[1],
        "feature_correlation": round(mean_abs_correlation(ds), 6),
        "methods": ",".join(methods),
        "rate": rate,
        "repetitions": reps,
        "seed": seed,
        "variant": oli_cfg.output_variant,
        "oli_solver": oli_cfg.m_solver,
        "lambda": oli_cfg.lam,
        "irmi_max_iter": irmi_cfg.max_iter,
        "prng": PRNG_ID,
        "standardized": "population std over observed entries",
    }
    return BenchmarkReport(sorted(summaries.values(), key=lambda s: s.label), metadata)
