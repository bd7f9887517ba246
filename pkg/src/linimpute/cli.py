"""Command-line interface: ``linimpute impute | benchmark | simulate``.

Exit codes: 0 success, 1 input/parse error, 2 solver failure (singular
regression), 3 IRMI diverged (nothing written).
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .baseline import mean_impute, median_impute
from .bench import METHODS, run_benchmark
from .dataset import PRNG_ID, DataError, inject_missing, load_csv, load_iris, standardize, write_csv
from .irmi import DIVERGED, IrmiConfig, fit_irmi
from .linalg import SingularMatrixError
from .oli import OliConfig
from .oli import fit as fit_oli
from .report import write_benchmark, write_table
from .synthetic import (
    SCALES,
    SimSpec,
    compare_methods_pairwise,
    mvn_equicorrelated,
    run_covariance_sweep,
    run_dimension_sweep,
)

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_DIVERGED = 0, 1, 2, 3
BUILTIN_IRIS = "builtin:iris"

FIG2A_RHOS = tuple(round(0.1 * k, 1) for k in range(1, 10))
FIG2B_DIMS = tuple(range(3, 21))

log = logging.getLogger("linimpute")


class DivergedError(Exception):
    pass


def default_seed():
    return int(os.environ.get("LINIMPUTE_SEED", "0"))


def _oli_config(args):
    return OliConfig(
        m_solver=getattr(args, "solver", "closed_form"),
        lam=args.lam,
        output_variant=args.variant,
    )


def load_input(path, missing_token=""):
    if path == BUILTIN_IRIS:
        return load_iris()
    return load_csv(path, missing_token)


def cmd_impute(args):
    ds = load_input(args.input, args.missing_token)
    work, params = standardize(ds) if args.standardize else (ds, None)
    cfg = _oli_config(args)
    diagnostics = {
        "tool": "linimpute impute",
        "version": __version__,
        "input": args.input,
        "method": args.method,
        "n_samples": ds.shape[0],
        "n_features": ds.shape[1],
        "n_imputed": ds.n_missing,
        "standardized": args.standardize,
        "config": {"variant": cfg.output_variant, "lambda": cfg.lam, "solver": cfg.m_solver,
                   "missing_token": args.missing_token},
    }
    if args.method == "oli":
        res = fit_oli(work, cfg)
        filled = res.imputed(cfg.output_variant)
        diagnostics.update(
            objective_trace=list(res.objective_trace),
            iterations=res.outer_iterations,
            converged=res.converged,
            solver_fallbacks=res.solver_fallbacks,
            config={**diagnostics["config"], "tol_outer": cfg.tol_outer,
                    "max_outer": cfg.max_outer, "init": cfg.init_method},
        )
    elif args.method == "irmi":
        irmi_cfg = IrmiConfig()
        out = fit_irmi(work, irmi_cfg)
        if out.status == DIVERGED:
            raise DivergedError(
                f"IRMI diverged after {out.iterations} sweeps: imputed values exceeded "
                f"1e{irmi_cfg.divergence_ratio:g} times the median absolute observed value "
                f"of their column (or became non-finite); no output written"
            )
        filled = work.fill(out.imputations)
        diagnostics.update(iterations=out.iterations, converged=out.status == "converged",
                           status=out.status, change_trace=list(out.change_trace))
    else:
        imps = median_impute(work) if args.method == "mi" else mean_impute(work)
        filled = work.fill(imps)
        diagnostics.update(iterations=0, converged=True)
    if params is not None:
        filled = params.inverse(filled)
    # observed cells are written from the parsed input, not the round trip
    result = np.where(ds.mask, filled, ds.values)
    if ds.n_missing == 0:
        diagnostics["note"] = "no missing cells; zero imputations"
    write_csv(args.out, result, ds.column_names)
    diag_path = args.diagnostics or f"{args.out}.diagnostics.json"
    with open(diag_path, "w", encoding="utf-8") as fh:
        json.dump(diagnostics, fh, indent=2)
        fh.write("\n")
    log.info("wrote %s and %s", args.out, diag_path)


def cmd_benchmark(args):
    ds = load_input(args.input, args.missing_token)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = run_benchmark(
        ds, methods, rate=args.rate, reps=args.reps, seed=args.seed,
        oli_cfg=_oli_config(args), jobs=args.jobs, source=args.input,
    )
    write_benchmark(args.out, report)
    for s in report.rows:
        mean = "-" if s.mean_mse is None else f"{s.mean_mse:.4f}"
        log.info("%-14s mse=%s converged=%d/%d", s.label, mean, s.converged, s.repetitions)


SWEEP_COLUMNS = ("sweep", "value", "method", "repetition", "mse", "status")
FIG1_COLUMNS = ("repetition", "row", "col", "true_value", "oli", "irmi")


def simulate_figure1(base, oli_cfg):
    """Per-cell OLI and IRMI imputations on d=5, rho=0.7 data, pooled over repetitions."""
    rows, skipped = [], []
    for rep in range(base.repetitions):
        spec = SimSpec(n=base.n, d=5, rho=0.7, missing_rate=base.missing_rate,
                       repetitions=1, seed=base.seed + rep)
        masked, truth = inject_missing(mvn_equicorrelated(spec), spec.missing_rate, spec.seed)
        cmp = compare_methods_pairwise(masked, truth, "oli", "irmi", oli_cfg)
        if cmp is None:
            skipped.append(rep)
            continue
        for r, c, t, a, b in cmp.cells:
            rows.append({"repetition": rep, "row": int(r), "col": int(c),
                         "true_value": float(t), "oli": float(a), "irmi": float(b)})
    stats = {}
    if rows:
        a = np.array([r["oli"] for r in rows])
        b = np.array([r["irmi"] for r in rows])
        t = np.array([r["true_value"] for r in rows])
        stats = {
            "value_correlation": float(np.corrcoef(a, b)[0, 1]),
            "signed_error_correlation": float(np.corrcoef(t - a, t - b)[0, 1]),
            "mean_abs_deviation": float(np.mean(np.abs(a - b))),
        }
    stats["irmi_failed_repetitions"] = ",".join(map(str, skipped))
    return rows, stats


def cmd_simulate(args):
    scale = SCALES[args.scale]
    base = SimSpec(n=scale["n"], repetitions=scale["repetitions"], seed=args.seed)
    oli_cfg = _oli_config(args)
    metadata = {
        "tool": "linimpute simulate",
        "version": __version__,
        "figure": args.figure,
        "scale": args.scale,
        "n_samples": base.n,
        "repetitions": base.repetitions,
        "missing_rate": base.missing_rate,
        "mean": base.mean,
        "seed": args.seed,
        "variant": oli_cfg.output_variant,
        "lambda": oli_cfg.lam,
        "prng": PRNG_ID,
    }
    if args.figure == "1":
        rows, stats = simulate_figure1(base, oli_cfg)
        metadata.update(d=5, rho=0.7, **stats)
        write_table(args.out, FIG1_COLUMNS, rows, metadata)
        return
    if args.figure == "2a":
        metadata.update(d=5, rho=" ".join(map(str, FIG2A_RHOS)))
        rows = run_covariance_sweep(FIG2A_RHOS, d=5, base=base, oli_cfg=oli_cfg, jobs=args.jobs)
    else:
        metadata.update(rho=0.7, d=" ".join(map(str, FIG2B_DIMS)))
        rows = run_dimension_sweep(FIG2B_DIMS, rho=0.7, base=base, oli_cfg=oli_cfg,
                                   jobs=args.jobs)
    write_table(args.out, SWEEP_COLUMNS, rows, metadata)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="linimpute",
        description="Impute missing values in numeric tables and benchmark imputation methods.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        # also accepted after the subcommand; SUPPRESS keeps the top-level value
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                       help="log progress")
        p.add_argument("--variant", choices=("direct", "regressed"), default="direct",
                       help="OLI output: optimized imputations or regression predictions")
        p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                       help="ridge weight on OLI regression slopes")

    p = sub.add_parser("impute", help="fill the missing cells of a CSV file")
    p.add_argument("input", help=f"CSV file with a header row, or {BUILTIN_IRIS}")
    p.add_argument("--method", choices=METHODS, default="oli")
    p.add_argument("--missing-token", default="", help="field marking a missing cell")
    p.add_argument("--solver", choices=("closed_form", "gradient"), default="closed_form")
    p.add_argument("--standardize", action="store_true",
                   help="impute on standardized columns, write back on the original scale")
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics", help="diagnostics JSON path (default: OUT.diagnostics.json)")
    common(p)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("benchmark", help="mask a complete dataset and score imputations")
    p.add_argument("input", help=f"complete CSV file, or {BUILTIN_IRIS}")
    p.add_argument("--methods", default="oli,irmi,mi")
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--missing-token", default="")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("simulate", help="synthetic Gaussian experiments, plot-ready CSV")
    p.add_argument("--figure", choices=("1", "2a", "2b"), required=True)
    p.add_argument("--scale", choices=tuple(SCALES), default="desk")
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except DivergedError as exc:
        print(f"linimpute: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except SingularMatrixError as exc:
        print(f"linimpute: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, OSError) as exc:
        print(f"linimpute: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
