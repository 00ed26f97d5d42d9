"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .model import ModelError


def check_states(X, radius: int | None = None) -> np.ndarray:
    """Validate an ``(n, 4)`` array of buffer states and return it as int64."""
    X = check_array(X, dtype=None, ensure_2d=True, ensure_min_samples=0)
    if X.shape[1] != 4:
        raise ValueError(f"states need 4 columns (one per class), got {X.shape[1]}")
    if not np.issubdtype(X.dtype, np.integer):
        Xf = np.asarray(X, dtype=float)
        if not np.all(np.isfinite(Xf)) or np.any(Xf != np.round(Xf)):
            raise ValueError("state counts must be integers")
        X = Xf
    X = np.asarray(X, dtype=np.int64)
    if (X < 0).any():
        raise ValueError("state counts must be nonnegative")
    if radius is not None and len(X) and X.sum(axis=1).max() > radius:
        raise ValueError(f"states with |x| > {radius} lie outside the solved window")
    return X


def check_probability_vector(mu) -> tuple[float, ...]:
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.shape != (4,):
        raise ModelError(f"mu needs 4 probabilities, got shape {mu.shape}")
    return tuple(float(p) for p in mu)


def check_coefficients(c) -> tuple[float, ...]:
    c = np.asarray(c, dtype=float).ravel()
    if c.shape != (4,):
        raise ModelError(f"cost needs 4 coefficients, got shape {c.shape}")
    return tuple(float(v) for v in c)
