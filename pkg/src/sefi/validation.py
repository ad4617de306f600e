"""Small input-validation helpers shared by the pipeline stages."""

from __future__ import annotations

import numpy as np


def as_float_matrix(X, name="X"):
    """Coerce to a 2-D float64 array, rejecting anything else."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} has no rows")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_mask(mask, height, width, name="mask"):
    """Validate a boolean foreground mask against expected grid dims."""
    mask = np.asarray(mask)
    if mask.dtype != bool:
        raise ValueError(f"{name} must be boolean, got {mask.dtype}")
    if mask.shape != (height, width):
        raise ValueError(
            f"{name} shape {mask.shape} does not match grid ({height}, {width})"
        )
    return mask


def check_same_grid(shape_a, shape_b, what="inputs"):
    if tuple(shape_a) != tuple(shape_b):
        raise ValueError(f"{what} have mismatched grids: {shape_a} vs {shape_b}")


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)
