"""Mean channel gain for LOS, OLOS and NLOS links and the Nakagami reference channel.

Sign convention
---------------
Dual-slope parameters are stored as channel *gain* in dB, exactly as they are
tabulated from the measurements: slopes and the reference value are negative,
so ``dual_slope_gain_db`` returns negative numbers and a received power is
``P_rx[dBm] = P_tx[dBm] + gain[dB]``. The NLOS intersection model is the
exception and is expressed as a positive path loss, like its original source.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive, check_probability
from .exceptions import ConfigError, ModelDomainError, OutOfRangeError

SPEED_OF_LIGHT = 299_792_458.0

#: Loss assigned to links between vehicles on parallel, non-intersecting streets.
#: It is infinite so that the linear received power is exactly zero.
PARALLEL_STREET_LOSS_DB = math.inf


@dataclass(frozen=True)
class PathLossParams:
    """One row of the dual-slope gain model.

    ``n1`` may be ``None`` when no short-range slope was fitted; the model then
    falls back to a single slope ``n2`` starting at ``d0_m``.
    """

    n1: float | None
    n2: float
    pl0_db: float
    sigma_db: float
    d0_m: float = 10.0
    db_m: float = 104.0

    def __post_init__(self):
        check_positive(self.d0_m, "d0_m", ConfigError)
        check_positive(self.db_m, "db_m", ConfigError)
        check_positive(self.sigma_db, "sigma_db", ConfigError)
        if self.db_m <= self.d0_m:
            raise ConfigError(f"breakpoint {self.db_m} m must exceed d0 {self.d0_m} m")
        for name in ("n2", "pl0_db") + (("n1",) if self.n1 is not None else ()):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def single_slope(self):
        return self.n1 is None


# scenario -> class -> parameters; values as published (gain convention)
PATH_LOSS_TABLE = {
    "highway": {
        "LOS": PathLossParams(n1=-1.66, n2=-2.88, pl0_db=-66.1, sigma_db=3.95),
        "OLOS": PathLossParams(n1=None, n2=-3.18, pl0_db=-76.1, sigma_db=6.12),
    },
    "urban": {
        "LOS": PathLossParams(n1=-1.81, n2=-2.85, pl0_db=-63.9, sigma_db=4.15),
        "OLOS": PathLossParams(n1=-1.93, n2=-2.74, pl0_db=-72.3, sigma_db=6.67),
    },
}


def dual_slope_gain_db(p, d):
    """Deterministic mean channel gain (dB) at distance ``d`` (m).

    Accepts a scalar or an array of distances. Distances below ``p.d0_m``
    raise :class:`OutOfRangeError`.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d_arr)) or np.any(d_arr < p.d0_m):
        raise OutOfRangeError(
            f"distance below the model validity range d >= {p.d0_m} m"
        )
    if p.n1 is None:
        out = p.pl0_db + 10.0 * p.n2 * np.log10(d_arr / p.d0_m)
    else:
        near = p.pl0_db + 10.0 * p.n1 * np.log10(d_arr / p.d0_m)
        at_break = p.pl0_db + 10.0 * p.n1 * math.log10(p.db_m / p.d0_m)
        far = at_break + 10.0 * p.n2 * np.log10(d_arr / p.db_m)
        out = np.where(d_arr <= p.db_m, near, far)
    return float(out) if out.ndim == 0 else out


def flat_earth_breakpoint(h_tx, h_rx, wavelength):
    """Distance (m) at which the first Fresnel zone touches flat ground."""
    check_positive(h_tx, "h_tx")
    check_positive(h_rx, "h_rx")
    check_positive(wavelength, "wavelength")
    return (4.0 * h_tx * h_rx - wavelength**2 / 4.0) / wavelength


def wavelength_from_frequency(freq_hz):
    return SPEED_OF_LIGHT / check_positive(freq_hz, "freq_hz")


@dataclass(frozen=True)
class NlosParams:
    """Parameters of the street-intersection NLOS model.

    The default breakpoint is the flat-earth value for 1.47 m antennas at
    5.6 GHz; pass another ``db_m`` for other setups.
    """

    n_nlos: float = 2.69
    sigma_db: float = 4.1
    suburban: int = 0
    db_m: float = field(default_factory=lambda: flat_earth_breakpoint(1.47, 1.47, 0.0536))
    wavelength_m: float = 0.0536

    def __post_init__(self):
        check_positive(self.n_nlos, "n_nlos", ConfigError)
        check_positive(self.sigma_db, "sigma_db", ConfigError)
        check_positive(self.db_m, "db_m", ConfigError)
        check_positive(self.wavelength_m, "wavelength_m", ConfigError)
        if self.suburban not in (0, 1):
            raise ConfigError("suburban flag must be 0 or 1")


@dataclass(frozen=True)
class NlosGeometry:
    """Distances describing a TX/RX pair around a street corner (all in m).

    dr, dt: RX and TX distance to the intersection center; wr: RX street
    width; xt: TX distance to the wall.
    """

    dr_m: float
    dt_m: float
    wr_m: float
    xt_m: float

    def __post_init__(self):
        for name in ("dr_m", "dt_m", "wr_m", "xt_m"):
            check_positive(getattr(self, name), name)


def nlos_path_loss_db(p, g):
    """Intersection NLOS path loss in dB (positive number)."""
    if not isinstance(g, NlosGeometry):
        g = NlosGeometry(*g)
    # log10 of d_t^0.957 / (x_t w_r)^0.81 * 4*pi / lambda, shared by both branches
    common = (
        0.957 * math.log10(g.dt_m)
        - 0.81 * math.log10(g.xt_m * g.wr_m)
        + math.log10(4.0 * math.pi / p.wavelength_m)
    )
    if g.dr_m <= p.db_m:
        dist = math.log10(g.dr_m)
    else:
        dist = 2.0 * math.log10(g.dr_m) - math.log10(p.db_m)
    return 3.75 + 2.94 * p.suburban + 10.0 * p.n_nlos * (common + dist)


def parallel_street_loss():
    """Loss for parallel-street links; such interference is ignored."""
    return PARALLEL_STREET_LOSS_DB


def mix_received_power(p_los, p_olos, prx_los, prx_olos, atol=1e-9):
    """Probability-weighted average of LOS and OLOS received power (linear units).

    Terms with zero probability contribute nothing, even where the matching
    power is undefined (NaN), so an empty class never poisons the mixture.
    """
    p_los = check_probability(p_los, "p_los")
    p_olos = check_probability(p_olos, "p_olos")
    if np.any(p_los + p_olos > 1.0 + atol):
        raise ModelDomainError("p_los + p_olos exceeds 1")
    prx_los = np.asarray(prx_los, dtype=float)
    prx_olos = np.asarray(prx_olos, dtype=float)
    for name, arr, prob in (("prx_los", prx_los, p_los), ("prx_olos", prx_olos, p_olos)):
        used = np.broadcast_to(prob > 0, np.broadcast(arr, prob).shape)
        vals = np.broadcast_to(arr, used.shape)[used]
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise ModelDomainError(f"{name} must be non-negative")
    with np.errstate(invalid="ignore"):
        out = np.where(p_los > 0, p_los * prx_los, 0.0) + np.where(
            p_olos > 0, p_olos * prx_olos, 0.0
        )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NakagamiParams:
    """Distance-dependent Nakagami-m channel.

    ``m_table`` holds ``(upper_bound_m, m)`` rows covering ``[0, upper]``
    in increasing order; ``mean`` gives the mean gain curve (gain convention).
    """

    m_table: tuple
    mean: PathLossParams

    def __post_init__(self):
        table = tuple((float(u), float(m)) for u, m in self.m_table)
        if not table:
            raise ConfigError("m_table is empty")
        bounds = [u for u, _ in table]
        if any(b <= a for a, b in zip([0.0] + bounds[:-1], bounds)):
            raise ConfigError("m_table bounds must be positive and strictly increasing")
        if any(m < 0.5 for _, m in table):
            raise ConfigError("Nakagami m must be >= 0.5")
        object.__setattr__(self, "m_table", table)

    @property
    def max_distance_m(self):
        return self.m_table[-1][0]

    def m_at(self, d):
        d_arr = np.asarray(d, dtype=float)
        if np.any(d_arr < 0) or np.any(d_arr > self.max_distance_m):
            raise ConfigError(
                f"distance outside the Nakagami table range [0, {self.max_distance_m}] m"
            )
        bounds = np.array([u for u, _ in self.m_table])
        ms = np.array([m for _, m in self.m_table])
        idx = np.searchsorted(bounds, d_arr, side="left")
        out = ms[idx]
        return float(out) if out.ndim == 0 else out

    def mean_gain_db(self, d):
        d_arr = np.maximum(np.asarray(d, dtype=float), self.mean.d0_m)
        return dual_slope_gain_db(self.mean, d_arr)


def nakagami_sample(p, d, rng, tx_power_w=1.0, size=None):
    """Draw received power (W) from the Nakagami-m channel at distance ``d``.

    The power is Gamma distributed with shape ``m(d)`` and mean
    ``tx_power_w * 10**(mean_gain_db(d)/10)``. Distances below the mean
    curve's ``d0`` use the gain at ``d0``.
    """
    m = p.m_at(d)
    mean_w = tx_power_w * 10.0 ** (np.asarray(p.mean_gain_db(d)) / 10.0)
    return rng.gamma(shape=m, scale=mean_w / m, size=size)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_mw(x_dbm):
    return db_to_linear(x_dbm)


def lognormal_mean_offset_db(sigma_db):
    """Gap (dB) between the linear-domain mean and the median of log-normal power."""
    s = sigma_db * math.log(10.0) / 10.0
    return 10.0 * math.log10(math.exp(s * s / 2.0))
