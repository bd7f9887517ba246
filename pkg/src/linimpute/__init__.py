"""Linear regression based imputation of missing values.

The main entry point is :class:`OLIImputer`, an optimized linear imputer
solved by block coordinate descent. :class:`IRMIImputer` and
:class:`BaselineImputer` are provided for comparison.
"""

__version__ = "0.1.0"

from .dataset import Dataset, HeldOut, inject_missing, load_csv, mse, standardize  # noqa: E402
from .estimators import BaselineImputer, IRMIImputer, OLIImputer  # noqa: E402
from .irmi import IrmiConfig, fit_irmi  # noqa: E402
from .oli import FitResult, OliConfig  # noqa: E402
from .oli import fit as fit_oli  # noqa: E402

__all__ = [
    "BaselineImputer",
    "Dataset",
    "FitResult",
    "HeldOut",
    "IRMIImputer",
    "IrmiConfig",
    "OLIImputer",
    "OliConfig",
    "fit_irmi",
    "fit_oli",
    "inject_missing",
    "load_csv",
    "mse",
    "standardize",
]
