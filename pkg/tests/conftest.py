import numpy as np
import pytest

from linimpute.dataset import Dataset


def random_instance(seed, n_max=30, d_max=6, rate=0.1):
    """Correlated Gaussian data with roughly ``rate`` of the cells missing.

    Each column keeps at least ``d + 2`` observed entries so every
    regression is well posed.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, d_max + 1))
    n = int(rng.integers(max(d + 6, 10), n_max + 1))
    W = rng.standard_normal((d, d))
    X = rng.standard_normal((n, d)) @ W + rng.standard_normal(d)
    mask = rng.random((n, d)) < rate
    for j in range(d):
        if (~mask[:, j]).sum() < d + 2:
            mask[: d + 2, j] = False
    if not mask.any():
        mask[0, 0] = True
    return Dataset(X, mask)


def divergent_irmi_dataset():
    """Two near-duplicate columns plus one row that breaks the near-duplication.

    IRMI's regression for the third column is fitted without that row and
    extrapolates to a value ~1e7 times the column scale there.
    """
    rng = np.random.default_rng(7)
    n = 20
    x1 = np.round(rng.standard_normal(n), 6)
    x2 = np.round(x1 + 1e-5 * rng.standard_normal(n), 8)
    x3 = np.round(x1 + rng.standard_normal(n), 6)
    x1[0], x2[0] = 500.0, -500.0
    X = np.c_[x1, x2, x3]
    mask = np.zeros(X.shape, dtype=bool)
    mask[0, 2] = mask[5, 2] = True
    return Dataset(X, mask, ("a", "b", "c"))


@pytest.fixture
def divergent_ds():
    return divergent_irmi_dataset()


# one "criterion N: PASS/FAIL ..." line per acceptance criterion, shown in the summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
