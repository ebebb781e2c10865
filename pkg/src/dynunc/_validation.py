"""Input validation helpers shared by the public functions and estimators."""

import numbers

import numpy as np

SYM_RTOL = 1e-10


def as_vector(x, name="x", dtype=float):
    """Return `x` as a finite 1-D float array (copy)."""
    arr = np.array(x, dtype=dtype, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(U, name="U"):
    arr = np.array(U, dtype=float, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def is_symmetric(U, rtol=SYM_RTOL):
    scale = max(np.max(np.abs(U)), np.finfo(float).tiny) if U.size else 1.0
    return np.max(np.abs(U - U.T), initial=0.0) <= rtol * scale


def check_covariance(U, n, name="U", rtol=SYM_RTOL):
    """Validate a square symmetric `n` x `n` covariance and return it symmetrized."""
    U = as_matrix(U, name)
    if U.shape != (n, n):
        raise ValueError(f"{name} must have shape ({n}, {n}), got {U.shape}")
    if not is_symmetric(U, rtol):
        raise ValueError(f"{name} is not symmetric within relative tolerance {rtol:g}")
    return 0.5 * (U + U.T)


def frozen(arr):
    """Mark an array read-only so value types stay immutable."""
    arr.setflags(write=False)
    return arr
