"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

from .errors import ConfigError


def check_volume_array(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite float32 (n, depth, height, width) array."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4:
        raise ConfigError(
            f"{name} must be (n_samples, depth, height, width), "
            f"got ndim {X.ndim}")
    if X.shape[0] == 0 or min(X.shape[1:]) <= 0:
        raise ConfigError(f"{name} has an empty dimension: {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ConfigError(f"{name} contains non-finite values")
    return X


def check_binary_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_samples,):
        raise ConfigError(
            f"y must have shape ({n_samples},), got {y.shape}")
    y = y.astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ConfigError("y must contain only 0/1 labels")
    return y


def check_is_fitted(estimator, attribute: str = "model_") -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first")
