"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .dataset import Dataset


def check_missing_array(X, min_observed=2):
    """Validate an array that marks missing cells with NaN and wrap it in a Dataset.

    Infinite values are rejected; every column needs ``min_observed``
    observed entries.
    """
    X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan", copy=True)
    counts = (~np.isnan(X)).sum(axis=0)
    short = np.flatnonzero(counts < min_observed)
    if short.size:
        raise ValueError(
            f"columns {short.tolist()} have fewer than {min_observed} observed values"
        )
    return Dataset.from_array(X)


def check_n_features(estimator, X):
    if X.shape[1] != estimator.n_features_in_:
        raise ValueError(
            f"X has {X.shape[1]} features, but {type(estimator).__name__} "
            f"was fitted with {estimator.n_features_in_}"
        )
