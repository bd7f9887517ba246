"""Data model, CSV input/output, standardization, MCAR masking and error metrics."""

import csv
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

PRNG_ID = f"numpy-{np.__version__}/PCG64(SeedSequence([stream, seed]))/ziggurat-normal"

# Independent random streams derived from one user seed.
STREAM_DATA = 0
STREAM_MASK = 1


def make_rng(seed, stream):
    """Seeded generator for one named stream.

    Every random draw in the package goes through here so that the data and
    the missingness mask of one experiment never share a stream.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([stream, seed])))


class DataError(ValueError):
    """Invalid or malformed input data."""


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """An ``N x d`` value matrix with a boolean missingness mask.

    Missing cells carry the value ``0`` so that ``values`` is directly the
    zeroed data block of the regression design matrix.
    """

    values: np.ndarray
    mask: np.ndarray
    column_names: tuple = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"values must be a non-empty N x d matrix, got shape {values.shape}")
        if mask.shape != values.shape:
            raise DataError(f"mask shape {mask.shape} does not match values shape {values.shape}")
        values[mask] = 0.0
        if not np.all(np.isfinite(values)):
            raise DataError("observed values must be finite")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise DataError(f"got {len(names)} column names for {values.shape[1]} columns")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))
        object.__setattr__(self, "column_names", names)

    @classmethod
    def from_array(cls, X, column_names=()):
        """Build from an array that marks missing cells with NaN."""
        X = np.asarray(X, dtype=float)
        mask = np.isnan(X)
        return cls(np.where(mask, 0.0, X), mask, column_names)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_missing(self):
        return int(self.mask.sum())

    def to_array(self):
        """Copy of the values with NaN at missing cells."""
        return np.where(self.mask, np.nan, self.values)

    def missing_cells(self):
        """``(rows, cols)`` index arrays of the missing cells in row-major order."""
        return np.nonzero(self.mask)

    def observed_counts(self):
        return (~self.mask).sum(axis=0)

    def fill(self, imputations):
        """Return a complete ``N x d`` array with ``imputations`` written into the missing cells."""
        out = self.values.copy()
        for r, c, v in imputations:
            out[r, c] = v
        return out


@dataclass(frozen=True)
class StandardizationParams:
    means: np.ndarray
    stds: np.ndarray

    def inverse(self, Z):
        """Map standardized values back to the original scale."""
        return np.asarray(Z, dtype=float) * self.stds + self.means


@dataclass(frozen=True)
class HeldOut:
    """True values of cells masked by :func:`inject_missing`."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.rows)

    def cells(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))


def load_csv(path, missing_token=""):
    """Read a numeric CSV with a header row.

    A field equal to ``missing_token`` (after stripping whitespace) or empty
    marks the cell as missing.

    Raises
    ------
    DataError
        On unreadable files, non-numeric fields, ragged rows, or when there
        are no data rows or columns.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_rows(rows, missing_token, source=str(path))


def parse_rows(rows, missing_token="", source="<input>"):
    rows = list(rows)
    if not rows or not rows[0]:
        raise DataError(f"{source}: missing header row")
    header = rows[0]
    d = len(header)
    # a blank line is a missing value in a one-column file, otherwise noise
    body = [r or [""] for r in rows[1:]] if d == 1 else [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{source}: no data rows")
    values = np.zeros((len(body), d))
    mask = np.zeros((len(body), d), dtype=bool)
    token = missing_token.strip()
    for i, row in enumerate(body):
        if len(row) != d:
            raise DataError(
                f"{source}: ragged row {i + 2}: expected {d} fields, got {len(row)}"
            )
        for j, raw in enumerate(row):
            text = raw.strip()
            if text == "" or text == token:
                mask[i, j] = True
                continue
            try:
                v = float(text)
            except ValueError:
                raise DataError(
                    f"{source}: non-numeric field {raw!r} at row {i + 2}, column {header[j]!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{source}: non-finite field {raw!r} at row {i + 2}")
            values[i, j] = v
    return Dataset(values, mask, tuple(h.strip() for h in header))


def format_value(v):
    # repr() is the shortest string that parses back to the same double
    return repr(float(v))


def write_csv(path, values, column_names, mask=None, missing_token=""):
    """Write a matrix as CSV; cells flagged in ``mask`` are written as ``missing_token``."""
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(column_names)
        for i in range(values.shape[0]):
            writer.writerow(
                missing_token if mask is not None and mask[i, j] else format_value(values[i, j])
                for j in range(values.shape[1])
            )


def write_dataset(path, ds, missing_token=""):
    write_csv(path, ds.values, ds.column_names, ds.mask, missing_token)


def load_iris():
    """The four numeric Iris measurements (150 complete rows), bundled with the package."""
    with resources.files("linimpute").joinpath("data/iris.csv").open(encoding="utf-8") as fh:
        return parse_rows(list(csv.reader(fh)), source="iris.csv")


def standardize(ds):
    """Rescale each column to observed mean 0 and standard deviation 1.

    Uses the population standard deviation (divide by the number of observed
    entries). Missing cells stay 0.

    Returns
    -------
    (Dataset, StandardizationParams)

    Raises
    ------
    DataError
        If a column has fewer than two observed entries or is constant.
    """
    obs = ~ds.mask
    counts = obs.sum(axis=0)
    for j in np.flatnonzero(counts < 2):
        raise DataError(f"column {ds.column_names[j]!r} has fewer than 2 observed entries")
    means = np.where(obs, ds.values, 0.0).sum(axis=0) / counts
    centered = np.where(obs, ds.values - means, 0.0)
    stds = np.sqrt((centered ** 2).sum(axis=0) / counts)
    for j in range(ds.shape[1]):
        col = ds.values[obs[:, j], j]
        if np.all(col == col[0]) or stds[j] <= 1e-12 * max(abs(means[j]), 1.0):
            raise DataError(f"constant column {ds.column_names[j]!r}")
    scaled = np.where(obs, centered / stds, 0.0)
    return (
        Dataset(scaled, ds.mask, ds.column_names),
        StandardizationParams(_readonly(means), _readonly(stds)),
    )


def inject_missing(ds, rate, seed):
    """Mask ``round(rate * N * d)`` cells chosen uniformly without replacement.

    Returns the masked dataset and the held-out true values, ordered
    row-major. The draw is deterministic for a given ``seed``.
    """
    if not 0 <= rate < 1:
        raise DataError(f"rate must be in [0, 1), got {rate}")
    if ds.n_missing:
        raise DataError("inject_missing expects a dataset without missing cells")
    n, d = ds.shape
    k = int(math.floor(rate * n * d + 0.5))
    flat = make_rng(seed, STREAM_MASK).choice(n * d, size=k, replace=False)
    flat.sort()
    rows, cols = np.divmod(flat, d)
    mask = np.zeros((n, d), dtype=bool)
    mask[rows, cols] = True
    for j in np.flatnonzero((~mask).sum(axis=0) < 2):
        raise DataError(
            f"rate {rate} leaves column {ds.column_names[j]!r} with fewer than 2 observed entries"
        )
    truth = HeldOut(_readonly(rows), _readonly(cols), _readonly(ds.values[rows, cols].copy()))
    return Dataset(ds.values, mask, ds.column_names), truth


def mse(imputed, truth):
    """Mean squared error of ``(row, col, value)`` imputations against held-out truth.

    Raises
    ------
    DataError
        If the imputed cells are not exactly the held-out cells.
    """
    imputed = list(imputed)
    expected = {(r, c): v for r, c, v in truth.cells()}
    got = {(int(r), int(c)): float(v) for r, c, v in imputed}
    if len(got) != len(imputed) or got.keys() != expected.keys():
        raise DataError("imputed cells do not match the held-out cells")
    if not expected:
        raise DataError("no held-out cells; MSE is undefined")
    return float(np.mean([(got[key] - v) ** 2 for key, v in expected.items()]))


def imputations_from_matrix(ds, full):
    """``(row, col, value)`` list for the missing cells of ``ds`` read from a completed matrix."""
    rows, cols = ds.missing_cells()
    return list(zip(rows.tolist(), cols.tolist(), np.asarray(full)[rows, cols].tolist()))


def mean_abs_correlation(ds):
    """Mean absolute pairwise Pearson correlation between columns, over rows observed in both."""
    d = ds.shape[1]
    rs = []
    for a in range(d):
        for b in range(a + 1, d):
            both = ~ds.mask[:, a] & ~ds.mask[:, b]
            if both.sum() > 2:
                r = np.corrcoef(ds.values[both, a], ds.values[both, b])[0, 1]
                if np.isfinite(r):
                    rs.append(abs(r))
    return float(np.mean(rs)) if rs else float("nan")
