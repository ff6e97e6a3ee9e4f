"""Synthetic data for exercising the estimation pipeline against known truth."""
import numpy as np

from ._validation import check_positive
from .estimation import CirTrace, GainSeries
from .propagation import dual_slope_gain_db
from .shadowing import AR, ShadowConfig, ShadowField, ShadowProcess


def shadow_trajectory(sigma_db, dc_m, step_m, n_steps, seed=0, link=0, mode=AR):
    """Shadowing values (dB) at positions ``step_m, 2*step_m, ...``.

    Returns ``(positions, values)``.
    """
    check_positive(step_m, "step_m")
    proc = ShadowProcess(ShadowConfig(sigma_db, dc_m, mode), seed, link)
    values = proc.trajectory(np.full(int(n_steps), float(step_m)))
    return step_m * np.arange(1, int(n_steps) + 1), values


def gain_series(params, d_max=1000.0, step_m=1.0, n_runs=20, dc_m=None, seed=0, noise_floor_db=None):
    """Drive-by gain measurements generated from a dual-slope curve.

    Each run sweeps the distance from ``params.d0_m`` to ``d_max`` in steps of
    ``step_m`` with its own correlated shadowing process (or independent
    draws when ``dc_m`` is None). Samples below ``noise_floor_db`` are
    censored and carry the floor as their value.
    """
    d = np.arange(params.d0_m, d_max + 1e-9, step_m)
    mean = dual_slope_gain_db(params, d)
    n_runs = int(n_runs)
    if dc_m is None:
        x = np.random.default_rng(seed).normal(0.0, params.sigma_db, (n_runs, d.size))
    else:
        # one process per run, all advanced together
        field = ShadowField(seed)
        keys = np.arange(n_runs, dtype=np.uint64)
        x = np.empty((n_runs, d.size))
        for k in range(d.size):
            x[:, k] = field.update(keys, 0.0 if k == 0 else step_m, params.sigma_db, dc_m)
    dist = np.tile(d, n_runs)
    gain = (mean + x).ravel()
    censored = np.zeros(gain.size, dtype=bool)
    if noise_floor_db is not None:
        censored = gain < noise_floor_db
        gain = np.where(censored, noise_floor_db, gain)
    return GainSeries(dist, gain, censored, noise_floor_db)


def rayleigh_cir(n_time, tap_powers, dt=1e-3, dtau=1e-8, seed=0):
    """Impulse responses with independent Rayleigh taps of the given mean powers."""
    rng = np.random.default_rng(seed)
    p = np.asarray(tap_powers, dtype=float)
    h = (rng.normal(size=(n_time, p.size)) + 1j * rng.normal(size=(n_time, p.size))) * np.sqrt(p / 2.0)
    return CirTrace(h, dt, dtau)
