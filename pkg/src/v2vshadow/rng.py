"""Counter-based random numbers.

Each draw is a pure function of ``(seed, key, counter)``, so a link's shadowing
trajectory does not depend on which other links exist or on the order in
which they are advanced. The mixing function is splitmix64.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * np.pi


def _mix(x):
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def _hash(seed, key, counter, lane):
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(seed, dtype=np.uint64))
        h = _mix(h ^ np.asarray(key, dtype=np.uint64))
        h = _mix(h ^ (np.asarray(counter, dtype=np.uint64) * np.uint64(4) + np.uint64(lane)))
    return h


def counter_uniforms(seed, key, counter, lane=0):
    """Uniform(0, 1) variates, open at both ends."""
    h = _hash(seed, key, counter, lane)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def counter_normals(seed, key, counter):
    """Standard normal variates via Box-Muller on two hashed uniforms."""
    u1 = counter_uniforms(seed, key, counter, 0)
    u2 = counter_uniforms(seed, key, counter, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def link_key(a, b):
    """Order-independent 64-bit key for the link between vehicle ids ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return (lo << np.uint64(32)) | hi
