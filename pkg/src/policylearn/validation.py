"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_float_matrix(x, name: str = "X") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {arr.shape}")
    return arr


def as_float_vector(x, name: str = "y") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got shape {arr.shape}")
    return arr


def as_int_vector(x, name: str = "values") -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got shape {arr.shape}")
    out = arr.astype(np.int64)
    if not np.array_equal(out, np.asarray(arr, dtype=np.float64)):
        raise ValueError(f"{name} must contain integers")
    return out


def check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).reshape(-1))[0])
        raise ValueError(f"{name} contains a non-finite value (flat index {bad})")


def check_same_length(n: int, arr: np.ndarray, name: str) -> None:
    if arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")


def check_arm_ids(arms: np.ndarray, d_arms: int, name: str = "actions") -> None:
    if arms.size and (arms.min() < 0 or arms.max() >= d_arms):
        bad = int(np.flatnonzero((arms < 0) | (arms >= d_arms))[0])
        raise ValueError(
            f"{name} must lie in 0..{d_arms - 1}; "
            f"row {bad} holds {int(arms[bad])}"
        )
