"""Input validation shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .data import Dataset, FamilyView


def check_binary(X, *, name: str = "X", ensure_2d: bool = True) -> np.ndarray:
    X = check_array(X, dtype=None, ensure_2d=ensure_2d, ensure_all_finite=True,
                    input_name=name)
    if X.size and not np.isin(X, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    return X.astype(np.uint8)


def check_family_arrays(X, y, sample_weight=None):
    """Validate ``(X, y, sample_weight)`` and wrap them as a family view."""
    X = check_binary(X)
    y = check_binary(np.asarray(y).reshape(-1, 1), name="y")[:, 0]
    check_consistent_length(X, y)
    names = [f"U{i}" for i in range(X.shape[1])] + ["X"]
    data = Dataset(names, np.column_stack([X, y]), sample_weight)
    return data.family("X")


def as_view(X, y=None, sample_weight=None) -> FamilyView:
    if isinstance(X, FamilyView):
        return X
    return check_family_arrays(X, y, sample_weight)
