"""Input checks shared by the estimators and training loops."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .exceptions import InvalidParamError, ShapeMismatchError
from .signal import N_CLASSES


def check_features(X, n_features=None) -> np.ndarray:
    """2-D finite float64 array, optionally with a fixed column count."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeMismatchError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_labels(y, n_samples=None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise InvalidParamError("labels must be 1-D")
    if n_samples is not None and y.size != n_samples:
        raise InvalidParamError(f"got {y.size} labels for {n_samples} samples")
    if y.size and (not np.all(np.equal(np.mod(y, 1), 0)) or y.min() < 0 or y.max() >= N_CLASSES):
        raise InvalidParamError(f"labels must be class indices in 0..{N_CLASSES - 1}")
    return y.astype(np.int64)


def check_fitted_net(estimator) -> None:
    if not hasattr(estimator, "net_"):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")
