"""Small argument checks shared by the estimators and model functions."""
import math
from numbers import Real

import numpy as np

from .exceptions import ConfigError, ModelDomainError


def check_positive(value, name, error=ModelDomainError):
    if not isinstance(value, Real) or not math.isfinite(value) or value <= 0:
        raise error(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_nonnegative(value, name, error=ModelDomainError):
    if not isinstance(value, Real) or not math.isfinite(value) or value < 0:
        raise error(f"{name} must be a non-negative finite number, got {value!r}")
    return float(value)


def check_probability(p, name):
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ModelDomainError(f"{name} must lie in [0, 1]")
    return arr


def check_1d(x, name, dtype=float):
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def check_keys(section, allowed, where):
    """Reject configuration keys that are not part of the schema."""
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
