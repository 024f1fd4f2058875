"""Input validation helpers used by the estimator layer and the functional core."""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError


def check_matrix(X, name: str = "X", *, allow_empty: bool = False) -> np.ndarray:
    """Coerce to a 2-D float64 array with finite entries."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ContractError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    return arr


def check_labels(y, n: int, name: str = "y") -> np.ndarray:
    """Coerce to a 1-D int array of length n."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.shape[0] != n:
        raise DimensionError(f"{name} has {arr.shape[0]} entries, expected {n}")
    return arr.astype(np.int64)


def check_probability(p: float, name: str, *, inclusive_high: bool = False) -> float:
    p = float(p)
    high_ok = p <= 1.0 if inclusive_high else p < 1.0
    if not (0.0 <= p and high_ok):
        raise ContractError(f"{name}={p} is not a valid probability")
    return p
