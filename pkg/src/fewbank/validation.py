"""Input validation helpers used by the estimator, the CLI, and the core ops."""

from __future__ import annotations

import numpy as np

from .errors import (
    BankShapeError,
    LabelRangeError,
    NonFiniteDataError,
    ZeroVectorError,
)


def as_matrix(x, name: str = "array") -> np.ndarray:
    """Coerce to a 2-D float64 C-contiguous matrix."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise BankShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_finite(x: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteDataError(f"{name} contains non-finite values")
    return x


def check_same_rows(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if a.shape[0] != b.shape[0]:
        raise BankShapeError(
            f"{what} disagree on row count: {a.shape[0]} vs {b.shape[0]}"
        )


def check_labels(labels, n_classes: int, name: str = "labels") -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise BankShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and (arr.dtype.kind not in "iu" or not np.all(arr == arr.astype(np.int64))):
        arr = arr.astype(np.int64)
    arr = arr.astype(np.int64)
    if arr.size:
        if arr.min() < 0 or arr.max() >= n_classes:
            raise LabelRangeError(
                f"{name} must lie in [0, {n_classes}), got range "
                f"[{arr.min()}, {arr.max()}]"
            )
    return arr


def l2_normalize(x: np.ndarray, name: str = "features") -> np.ndarray:
    """Return a row-normalized copy; zero rows are rejected."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms.ravel() == 0.0)[0])
        raise ZeroVectorError(f"{name} row {bad} has zero norm")
    return x / norms
