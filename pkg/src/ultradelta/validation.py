"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np

from .exceptions import UsageError


def check_sparsity(s, name="sparsity"):
    """Return ``s`` as float, requiring ``0 <= s < 1``."""
    if not isinstance(s, numbers.Real) or not np.isfinite(s):
        raise UsageError(f"{name} must be a finite real, got {s!r}")
    s = float(s)
    if not 0.0 <= s < 1.0:
        raise UsageError(f"{name} must lie in [0, 1), got {s}")
    return s


def check_bit_width(b, low=2, high=16):
    if isinstance(b, bool) or not isinstance(b, numbers.Integral):
        raise UsageError(f"bit width must be an integer, got {b!r}")
    b = int(b)
    if not low <= b <= high:
        raise UsageError(f"bit width must lie in [{low}, {high}], got {b}")
    return b


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise UsageError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise UsageError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def check_positive_int(v, name):
    if isinstance(v, bool) or not isinstance(v, numbers.Integral) or v < 1:
        raise UsageError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


def check_array(x, name="array", ndim=None, allow_empty=False):
    """Widen ``x`` to a float64 ndarray and validate it."""
    arr = np.asarray(x)
    if arr.dtype.kind not in "fiu":
        raise UsageError(f"{name} must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.float64, copy=False)
    if ndim is not None and arr.ndim != ndim:
        raise UsageError(f"{name} must have {ndim} dimensions, got {arr.ndim}")
    if not allow_empty and arr.size == 0:
        raise UsageError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr
