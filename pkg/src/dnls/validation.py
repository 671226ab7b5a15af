"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import ValidationError


def check_scalar(x, name, *, min_val=None, max_val=None, include_min=True,
                 include_max=True, allow_inf=False):
    """Validate a real scalar and return it as ``float``."""
    if isinstance(x, bool) or not isinstance(x, (numbers.Real, np.floating, np.integer)):
        raise ValidationError(f"{name} must be a real number, got {x!r}")
    x = float(x)
    if np.isnan(x) or (np.isinf(x) and not allow_inf):
        raise ValidationError(f"{name} must be finite, got {x!r}")
    if min_val is not None:
        if (include_min and x < min_val) or (not include_min and x <= min_val):
            op = ">=" if include_min else ">"
            raise ValidationError(f"{name} must be {op} {min_val}, got {x!r}")
    if max_val is not None:
        if (include_max and x > max_val) or (not include_max and x >= max_val):
            op = "<=" if include_max else "<"
            raise ValidationError(f"{name} must be {op} {max_val}, got {x!r}")
    return x


def check_int(x, name, *, min_val=None):
    if isinstance(x, bool) or not isinstance(x, (numbers.Integral, np.integer)):
        if isinstance(x, (float, np.floating)) and float(x).is_integer():
            x = int(x)
        else:
            raise ValidationError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if min_val is not None and x < min_val:
        raise ValidationError(f"{name} must be >= {min_val}, got {x}")
    return x


def check_amplitudes(a, name="amplitudes", half_width=None):
    """Return ``a`` as a contiguous complex128 vector of odd length.

    Raises ``ValidationError`` on wrong shape or non-finite entries.
    """
    arr = np.asarray(a)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0 or arr.size % 2 == 0:
        raise ValidationError(
            f"{name} must have odd length 2m+1 with m >= 0, got {arr.size}")
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    if half_width is not None and arr.size != 2 * half_width + 1:
        raise ValidationError(
            f"{name} has length {arr.size}, expected {2 * half_width + 1} "
            f"for half width {half_width}")
    return arr


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.integer)):
        return np.random.default_rng(seed)
    if isinstance(seed, (list, tuple)):
        return np.random.default_rng(list(seed))
    raise ValidationError(f"cannot build a random generator from {seed!r}")
