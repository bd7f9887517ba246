"""Column median / mean imputation."""

import numpy as np

from .dataset import DataError


def column_statistic(ds, statistic="median"):
    """Per-column median or mean over observed entries.

    ``np.median`` averages the two middle order statistics for even counts.
    """
    funcs = {"median": np.median, "mean": np.mean}
    if statistic not in funcs:
        raise ValueError(f"unknown statistic {statistic!r}; expected 'median' or 'mean'")
    out = np.empty(ds.shape[1])
    for j in range(ds.shape[1]):
        col = ds.values[~ds.mask[:, j], j]
        if col.size == 0:
            raise DataError(f"column {ds.column_names[j]!r} has no observed entries")
        out[j] = funcs[statistic](col)
    return out


def _impute(ds, statistic):
    if not ds.n_missing:
        return []
    stat = column_statistic(ds, statistic)
    rows, cols = ds.missing_cells()
    return list(zip(rows.tolist(), cols.tolist(), stat[cols].tolist()))


def median_impute(ds):
    """``(row, col, value)`` for every missing cell, filled with the column median."""
    return _impute(ds, "median")


def mean_impute(ds):
    """``(row, col, value)`` for every missing cell, filled with the column mean."""
    return _impute(ds, "mean")
