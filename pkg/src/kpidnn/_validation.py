"""Input checks shared by the estimators."""
import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionMismatch


def check_rows(X, k=None, n_features=None):
    """2-D float array of windows; optionally enforce the ``5k+3`` width."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if k is not None and X.shape[1] != 5 * int(k) + 3:
        raise DimensionMismatch(f"expected {5 * int(k) + 3} columns for k={k}, got {X.shape[1]}")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(f"expected {n_features} columns, got {X.shape[1]}")
    return X


def check_labels(y, n):
    y = np.asarray(y).astype(np.int64, copy=False).ravel()
    if y.size != n:
        raise DimensionMismatch(f"{n} rows but {y.size} labels")
    bad = ~np.isin(y, (0, 1))
    if bad.any():
        raise ValueError(f"labels must be 0 (anomaly) or 1 (normal); found {np.unique(y[bad])}")
    return y


def degenerate_rows(X):
    """Rows whose values are all equal (constant raw window)."""
    return X.max(axis=1) == X.min(axis=1)
