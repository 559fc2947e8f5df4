"""Input validation helpers shared by the estimator-facing modules."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, LabelError, ShapeError
from .labels import label_to_index


def as_float_matrix(data, name: str = "data") -> np.ndarray:
    """Coerce to a 2-D float64 array, raising ShapeError otherwise."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def as_float_vector(data, name: str = "vector") -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str = "data") -> None:
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")


def as_label_indices(labels, count: int | None = None) -> np.ndarray:
    """Map benign/malicious labels (or 0/1 ints) to an int8 index array."""
    out = []
    for item in labels:
        if isinstance(item, str):
            out.append(label_to_index(item))
        elif item in (0, 1):
            out.append(int(item))
        else:
            raise LabelError(f"unknown label {item!r}")
    arr = np.asarray(out, dtype=np.int8)
    if count is not None and len(arr) != count:
        raise ShapeError(f"expected {count} labels, got {len(arr)}")
    return arr
