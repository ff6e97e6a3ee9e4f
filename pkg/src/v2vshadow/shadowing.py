"""Spatially correlated log-normal shadowing.

The shadow term of a link is a zero-mean Gaussian in dB whose autocorrelation
over a displacement ``dd`` is ``exp(-|dd|/dc)``. It is generated as a
first-order autoregressive process in displacement, or optionally as block
fading with block length ``dc``.

Internally every process keeps the normalized state ``z = X / sigma``. When a
link changes class, sigma and dc switch while ``z`` is retained.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_nonnegative, check_positive
from .exceptions import ConfigError, ModelDomainError
from .rng import counter_normals, link_key

AR = "AR"
BLOCK = "BLOCK"

_BLOCK_SALT = 0x5EED_B10C

#: Decorrelation distances in meters, per scenario and class.
DECORRELATION_TABLE = {
    "highway": {"LOS": 23.3, "OLOS": 32.5},
    "urban": {"LOS": 4.25, "OLOS": 4.5},
}

#: No decorrelation distance is available for NLOS; the urban OLOS value stands in.
NLOS_SIGMA_DB = 4.1
NLOS_DC_M = DECORRELATION_TABLE["urban"]["OLOS"]


@dataclass(frozen=True)
class ShadowConfig:
    sigma_db: float
    dc_m: float
    mode: str = AR

    def __post_init__(self):
        check_positive(self.sigma_db, "sigma_db", ConfigError)
        check_positive(self.dc_m, "dc_m", ConfigError)
        if self.mode not in (AR, BLOCK):
            raise ConfigError(f"shadowing mode must be {AR!r} or {BLOCK!r}, got {self.mode!r}")


def autocorrelation(dc, delta_d):
    """Exponential autocorrelation ``exp(-|delta_d| / dc)``."""
    check_positive(dc, "dc")
    return np.exp(-np.abs(np.asarray(delta_d, dtype=float)) / dc)


def ar_coefficient(dc, delta_d):
    return math.exp(-abs(delta_d) / dc)


class ShadowProcess:
    """Shadowing state of a single link.

    Parameters
    ----------
    config : ShadowConfig
    seed : int
        Run seed.
    link : int or tuple of two ints
        Link identifier. A pair of vehicle ids is folded into an
        order-independent key so that both directions share one process.
    """

    def __init__(self, config, seed, link):
        self.config = config
        self.seed = int(seed)
        self.key = int(link_key(*link)) if isinstance(link, tuple) else int(link)
        self.counter = 0
        self.last_position_m = 0.0
        self._z = float(counter_normals(self.seed, self.key, 0))

    @property
    def last_value_db(self):
        if self.config.mode == BLOCK:
            return self.block_value(self.last_position_m)
        return self.config.sigma_db * self._z

    def advance(self, delta_d):
        """Move the link by ``delta_d`` meters and return the new shadow value (dB)."""
        delta_d = check_nonnegative(delta_d, "delta_d")
        self.last_position_m += delta_d
        if self.config.mode == BLOCK:
            return self.block_value(self.last_position_m)
        self.counter += 1
        rho = ar_coefficient(self.config.dc_m, delta_d)
        innovation = float(counter_normals(self.seed, self.key, self.counter))
        self._z = rho * self._z + math.sqrt(max(0.0, 1.0 - rho * rho)) * innovation
        return self.config.sigma_db * self._z

    def block_value(self, position):
        """Shadow value (dB) of the block containing ``position``."""
        position = check_nonnegative(position, "position")
        block = math.floor(position / self.config.dc_m)
        return self.config.sigma_db * float(
            counter_normals(self.seed ^ _BLOCK_SALT, self.key, block)
        )

    def switch(self, config):
        """Adopt new sigma/dc (e.g. after a LOS/OLOS change), keeping ``X / sigma``."""
        self.config = config

    def trajectory(self, deltas):
        """Advance through a sequence of displacements; returns the values (dB).

        Same result (to rounding) as calling :meth:`advance` once per
        displacement, with the innovations drawn in one batch.
        """
        deltas = np.asarray(deltas, dtype=float)
        if np.any(~np.isfinite(deltas)) or np.any(deltas < 0):
            raise ModelDomainError("delta_d must be finite and non-negative")
        n = deltas.size
        positions = self.last_position_m + np.cumsum(deltas)
        if self.config.mode == BLOCK:
            blocks = np.floor(positions / self.config.dc_m).astype(np.uint64)
            self.last_position_m = float(positions[-1]) if n else self.last_position_m
            return self.config.sigma_db * counter_normals(self.seed ^ _BLOCK_SALT, self.key, blocks)
        counters = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        innov = counter_normals(self.seed, self.key, counters)
        rho = np.exp(-deltas / self.config.dc_m)
        gain = np.sqrt(np.maximum(0.0, 1.0 - rho * rho))
        out = np.empty(n)
        z = self._z
        for k in range(n):
            z = rho[k] * z + gain[k] * innov[k]
            out[k] = z
        self._z = z
        self.counter += n
        if n:
            self.last_position_m = float(positions[-1])
        return self.config.sigma_db * out


class ShadowField:
    """Vectorized collection of independent link processes.

    Each call to :meth:`update` receives the set of currently tracked links
    with their displacement since the previous call and the sigma/dc of their
    current class. Links seen for the first time start from the stationary
    distribution; links missing from a call are forgotten. A link advanced
    through this class follows exactly the trajectory of a
    :class:`ShadowProcess` with the same seed, key and displacements.
    """

    def __init__(self, seed, mode=AR):
        if mode not in (AR, BLOCK):
            raise ConfigError(f"unknown shadowing mode {mode!r}")
        self.seed = int(seed)
        self.mode = mode
        self._keys = np.empty(0, dtype=np.uint64)
        self._z = np.empty(0)
        self._counter = np.empty(0, dtype=np.uint64)
        self._pos = np.empty(0)

    def __len__(self):
        return self._keys.size

    def update(self, keys, delta_d, sigma_db, dc_m):
        keys = np.asarray(keys, dtype=np.uint64)
        delta_d = np.broadcast_to(np.asarray(delta_d, dtype=float), keys.shape)
        sigma_db = np.broadcast_to(np.asarray(sigma_db, dtype=float), keys.shape)
        dc_m = np.broadcast_to(np.asarray(dc_m, dtype=float), keys.shape)

        if self._keys.size:
            idx_c = np.minimum(np.searchsorted(self._keys, keys), self._keys.size - 1)
            known = self._keys[idx_c] == keys
        else:
            idx_c = np.zeros(keys.shape, dtype=np.intp)
            known = np.zeros(keys.shape, dtype=bool)

        z = np.empty(keys.shape)
        counter = np.zeros(keys.shape, dtype=np.uint64)
        pos = np.zeros(keys.shape)

        new = ~known
        z[new] = counter_normals(self.seed, keys[new], np.zeros(new.sum(), dtype=np.uint64))

        old = idx_c[known]
        counter[known] = self._counter[old] + np.uint64(1)
        pos[known] = self._pos[old] + delta_d[known]
        if self.mode == AR:
            rho = np.exp(-np.abs(delta_d[known]) / dc_m[known])
            innov = counter_normals(self.seed, keys[known], counter[known])
            z[known] = rho * self._z[old] + np.sqrt(np.maximum(0.0, 1.0 - rho * rho)) * innov
            values = sigma_db * z
        else:
            z[known] = self._z[old]
            block = np.floor(pos / dc_m).astype(np.uint64)
            values = sigma_db * counter_normals(self.seed ^ _BLOCK_SALT, keys, block)

        order = np.argsort(keys, kind="stable")
        self._keys = keys[order]
        self._z = z[order]
        self._counter = counter[order]
        self._pos = pos[order]
        return values
