"""Parameter estimation from channel measurements.

The pipeline goes from complex impulse responses to averaged power delay
profiles, noise-thresholded channel gains, path loss, a dual-slope fit on
binned medians, an EM estimate of censored log-normal statistics and the
decorrelation distance of the shadowing residual.

The fitting steps follow the scikit-learn estimator conventions
(``fit`` returns ``self``, learned attributes end with ``_``); plain function
wrappers are provided for one-shot use.
"""
import csv
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_1d, check_positive
from .exceptions import InsufficientDataError, ModelDomainError, NonIdentifiableError
from .propagation import PathLossParams

# -- data containers ---------------------------------------------------------

_CIR_HEADER = struct.Struct("<QQdd")


@dataclass
class CirTrace:
    """Complex impulse responses ``h[t_k, tau]`` sampled every ``dt`` and ``dtau`` seconds."""

    h: np.ndarray
    dt: float
    dtau: float

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        if self.h.ndim != 2:
            raise ModelDomainError("impulse responses must be a (time, delay) matrix")
        if not np.all(np.isfinite(self.h)):
            raise ModelDomainError("impulse responses must be finite")
        check_positive(self.dt, "dt")
        check_positive(self.dtau, "dtau")

    @property
    def shape(self):
        return self.h.shape

    def to_bytes(self):
        n_t, n_tau = self.h.shape
        body = np.empty((n_t, n_tau, 2), dtype="<f8")
        body[..., 0] = self.h.real
        body[..., 1] = self.h.imag
        return _CIR_HEADER.pack(n_t, n_tau, self.dt, self.dtau) + body.tobytes()

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _CIR_HEADER.size:
            raise ModelDomainError("truncated impulse-response header")
        n_t, n_tau, dt, dtau = _CIR_HEADER.unpack_from(data)
        expected = _CIR_HEADER.size + 16 * n_t * n_tau
        if len(data) != expected:
            raise ModelDomainError(f"expected {expected} bytes for a {n_t}x{n_tau} trace, got {len(data)}")
        body = np.frombuffer(data, dtype="<f8", offset=_CIR_HEADER.size).reshape(n_t, n_tau, 2)
        return cls(body[..., 0] + 1j * body[..., 1], dt, dtau)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


@dataclass
class GainSeries:
    """Channel gain samples against distance.

    Censored samples (below the noise threshold) store the threshold in
    ``gain_db`` and carry ``censored=True``.
    """

    distance_m: np.ndarray
    gain_db: np.ndarray
    censored: np.ndarray = None
    noise_floor_db: float = None

    def __post_init__(self):
        self.distance_m = check_1d(self.distance_m, "distance_m")
        self.gain_db = check_1d(self.gain_db, "gain_db")
        if self.censored is None:
            self.censored = np.zeros(self.distance_m.size, dtype=bool)
        self.censored = np.asarray(self.censored, dtype=bool).ravel()
        if not (self.distance_m.size == self.gain_db.size == self.censored.size):
            raise ModelDomainError("distance, gain and censoring flags must have equal length")
        if np.any(~np.isfinite(self.distance_m)) or np.any(self.distance_m <= 0):
            raise ModelDomainError("distances must be positive")
        if np.any(~np.isfinite(self.gain_db)):
            raise ModelDomainError("gain values must be finite (censored samples carry the threshold)")

    def __len__(self):
        return self.distance_m.size

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["distance_m", "gain_db", "censored"])
            for d, g, c in zip(self.distance_m, self.gain_db, self.censored):
                w.writerow([repr(float(d)), repr(float(g)), int(c)])

    @classmethod
    def from_csv(cls, path, noise_floor_db=None):
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            missing = {"distance_m", "gain_db"} - set(reader.fieldnames or ())
            if missing:
                raise ModelDomainError(f"gain CSV lacks columns {sorted(missing)}")
            d, g, c = [], [], []
            for row in reader:
                d.append(float(row["distance_m"]))
                g.append(float(row["gain_db"]))
                c.append(int(row.get("censored") or 0) != 0)
        return cls(np.array(d), np.array(g), np.array(c, dtype=bool), noise_floor_db)


# -- gain extraction ---------------------------------------------------------


def compute_apdp(cir, n_avg):
    """Average the instantaneous PDP ``|h|^2`` over blocks of ``n_avg`` snapshots.

    Returns an array of shape ``(n_blocks, n_delay)`` for block start times
    ``0, n_avg*dt, ...``. A trailing partial block is dropped.
    """
    h = cir.h if isinstance(cir, CirTrace) else np.asarray(cir, dtype=complex)
    if h.ndim != 2 or h.shape[0] == 0 or h.shape[1] == 0:
        raise ModelDomainError("empty impulse-response trace")
    n_avg = int(n_avg)
    if n_avg < 1 or n_avg > h.shape[0]:
        raise ModelDomainError(f"n_avg must be in [1, {h.shape[0]}], got {n_avg}")
    n_blocks = h.shape[0] // n_avg
    p = np.abs(h[: n_blocks * n_avg]) ** 2
    return p.reshape(n_blocks, n_avg, h.shape[1]).mean(axis=1)


def channel_gain(pdp, noise_floor_db, margin_db=3.0):
    """Sum of the PDP taps at or above ``noise_floor_db + margin_db``, in dB.

    Works on one PDP or on a ``(n_blocks, n_delay)`` stack. A PDP with no tap
    above the threshold is censored and yields NaN.
    """
    pdp = np.asarray(pdp, dtype=float)
    thr = 10.0 ** ((noise_floor_db + margin_db) / 10.0)
    kept = np.where(pdp >= thr, pdp, 0.0)
    total = kept.sum(axis=-1)
    with np.errstate(divide="ignore"):
        out = np.where(total > 0, 10.0 * np.log10(np.where(total > 0, total, 1.0)), np.nan)
    return float(out) if out.ndim == 0 else out


def pathloss_from_gain(gain_db, ga_dbi=3.7, pil_db=0.0):
    """Path loss (dB) from the measured gain, antenna gain and implementation loss."""
    return 2.0 * np.asarray(ga_dbi, dtype=float) - pil_db - np.asarray(gain_db, dtype=float)


# -- censored normal EM --------------------------------------------------------


def _censored_loglik(x, thr, mu, sigma):
    z = (x - mu) / sigma
    ll = np.sum(-0.5 * z * z - math.log(sigma) - 0.5 * math.log(2.0 * math.pi))
    if thr.size:
        ll += np.sum(special.log_ndtr((thr - mu) / sigma))
    return float(ll)


class CensoredNormalEM(BaseEstimator):
    """Maximum-likelihood normal fit to left-censored data via EM.

    Parameters
    ----------
    tol : float
        Stop when both the mean and standard deviation change by less than
        ``tol`` (dB) between iterations.
    max_iter : int

    Attributes
    ----------
    mu_, sigma_ : float
    n_iter_ : int
    loglik_ : ndarray
        Observed-data log-likelihood, one entry per iterate starting from the
        initial guess.
    converged_ : bool
    """

    def __init__(self, tol=1e-6, max_iter=500):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, values, censored_count=0, threshold_db=None):
        x = check_1d(values, "values")
        n_c = int(censored_count)
        if n_c < 0:
            raise ModelDomainError("censored_count must be >= 0")
        if x.size == 0:
            raise NonIdentifiableError("all samples are censored")
        if x.size < 2:
            raise NonIdentifiableError("at least two observed values are needed")
        if n_c and threshold_db is None:
            raise ModelDomainError("a threshold is needed for censored samples")
        thr = np.broadcast_to(np.asarray(threshold_db if n_c else 0.0, dtype=float), (n_c,)).copy()

        n = x.size + n_c
        mu, sigma = float(x.mean()), float(x.std())
        if sigma <= 0:
            raise NonIdentifiableError("observed values have zero spread")
        history = [_censored_loglik(x, thr, mu, sigma)]
        converged = n_c == 0
        it = 0
        sx, sxx = x.sum(), np.dot(x, x)
        while not converged and it < self.max_iter:
            it += 1
            a = (thr - mu) / sigma
            # inverse Mills ratio phi(a) / Phi(a), stable for very negative a
            lam = np.exp(-0.5 * a * a - 0.5 * math.log(2.0 * math.pi) - special.log_ndtr(a))
            ex = mu - sigma * lam
            var = sigma * sigma * (1.0 - a * lam - lam * lam)
            exx = np.maximum(var, 0.0) + ex * ex
            mu_new = (sx + ex.sum()) / n
            sigma_new = math.sqrt(max((sxx + exx.sum()) / n - mu_new * mu_new, 0.0))
            converged = abs(mu_new - mu) < self.tol and abs(sigma_new - sigma) < self.tol
            mu, sigma = float(mu_new), float(sigma_new)
            history.append(_censored_loglik(x, thr, mu, sigma))
        self.mu_ = mu
        self.sigma_ = sigma
        self.n_iter_ = it
        self.converged_ = converged
        self.loglik_ = np.array(history)
        self.censored_fraction_ = n_c / n
        return self


def em_censored_lognormal(values, censored_count, threshold_db, tol=1e-6, max_iter=500):
    """Return ``(mu_db, sigma_db)`` for dB data with ``censored_count`` samples below ``threshold_db``."""
    est = CensoredNormalEM(tol=tol, max_iter=max_iter).fit(values, censored_count, threshold_db)
    return est.mu_, est.sigma_


# -- dual-slope fit ------------------------------------------------------------


def _bin_edges(d0, db, d_max, n_bins):
    edges = np.geomspace(d0, d_max, n_bins + 1)
    if d0 < db < d_max:
        edges = np.union1d(edges, [db])
    return edges


class DualSlopeRegressor(RegressorMixin, BaseEstimator):
    """Continuous dual-slope fit of channel gain (dB) against distance.

    Samples are grouped in log-spaced distance bins, with the breakpoint
    inserted as an extra bin edge. The model is fitted in least squares to
    the bin medians with a single intercept at ``d0``, so both slopes meet
    at ``db``. Censored samples rank below every observed value when the
    medians are taken; a bin whose median is censored is not used.

    Parameters
    ----------
    d0 : float
        Reference distance (m).
    db : float
        Breakpoint distance (m).
    n_bins : int
        Number of log-spaced bins between ``d0`` and the largest distance.
    single_slope : bool
        Fit one slope from ``d0`` (``n1_`` is then None).
    min_bins : int
        Required bins with an observed median on each side of ``db``.

    Attributes
    ----------
    n1_, n2_, pl0_ : float
    sigma_ : float
        Spread of the samples about the fitted curve. With censoring it comes
        from the censored-normal EM on the residuals.
    params_ : PathLossParams
    bin_distance_, bin_median_, bin_count_ : ndarray
    """

    def __init__(self, d0=10.0, db=104.0, n_bins=25, single_slope=False, min_bins=2):
        self.d0 = d0
        self.db = db
        self.n_bins = n_bins
        self.single_slope = single_slope
        self.min_bins = min_bins

    def _design(self, d):
        ld = np.log10(np.asarray(d, dtype=float) / self.d0)
        if self.single_slope:
            return np.column_stack([np.ones_like(ld), 10.0 * ld])
        lb = math.log10(self.db / self.d0)
        return np.column_stack([np.ones_like(ld), 10.0 * np.minimum(ld, lb), 10.0 * np.maximum(ld - lb, 0.0)])

    def fit(self, X, y, censored=None):
        d = check_1d(X, "distance")
        g = check_1d(y, "gain_db")
        cens = np.zeros(d.size, dtype=bool) if censored is None else np.asarray(censored, dtype=bool).ravel()
        if not (d.size == g.size == cens.size):
            raise ModelDomainError("distance, gain and censoring flags must have equal length")
        check_positive(self.d0, "d0")
        if self.db <= self.d0:
            raise ModelDomainError("db must exceed d0")
        keep = d >= self.d0
        d, g, cens = d[keep], g[keep], cens[keep]
        if d.size == 0:
            raise InsufficientDataError("no samples at or beyond d0")

        edges = _bin_edges(self.d0, self.db, d.max() * (1 + 1e-12), self.n_bins)
        idx = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, edges.size - 2)
        ranked = np.where(cens, -np.inf, g)
        xs, ys, counts = [], [], []
        for b in range(edges.size - 1):
            m = idx == b
            if not m.any():
                continue
            med = np.median(ranked[m])
            if not np.isfinite(med):
                continue
            xs.append(10.0 ** np.median(np.log10(d[m])))
            ys.append(med)
            counts.append(int(m.sum()))
        xs, ys = np.array(xs), np.array(ys)
        below = int(np.sum(xs <= self.db))
        above = xs.size - below
        if self.single_slope:
            if xs.size < 2 * self.min_bins:
                raise InsufficientDataError(f"only {xs.size} usable bins for a single-slope fit")
        else:
            short = [name for name, k in (("below", below), ("above", above)) if k < self.min_bins]
            if short:
                raise InsufficientDataError(
                    f"need {self.min_bins} usable bins on each side of db={self.db} m; "
                    f"found {below} below and {above} above (deficient: {', '.join(short)})"
                )
        coef, *_ = np.linalg.lstsq(self._design(xs), ys, rcond=None)
        self.pl0_ = float(coef[0])
        if self.single_slope:
            self.n1_, self.n2_ = None, float(coef[1])
        else:
            self.n1_, self.n2_ = float(coef[1]), float(coef[2])
        self.coef_ = coef
        self.bin_distance_, self.bin_median_, self.bin_count_ = xs, ys, np.array(counts)

        curve = self._design(d) @ coef
        resid = g[~cens] - curve[~cens]
        if cens.any():
            self.sigma_ = CensoredNormalEM().fit(resid, int(cens.sum()), g[cens] - curve[cens]).sigma_
        else:
            self.sigma_ = float(np.sqrt(np.mean((resid - resid.mean()) ** 2)))
        self.params_ = PathLossParams(
            n1=self.n1_, n2=self.n2_, pl0_db=self.pl0_, sigma_db=max(self.sigma_, 1e-12),
            d0_m=self.d0, db_m=self.db,
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self._design(check_1d(X, "distance")) @ self.coef_


def fit_dual_slope(series, d0=10.0, db=104.0, n_bins=25, single_slope=False):
    """Fit a :class:`GainSeries` and return the resulting :class:`PathLossParams`."""
    reg = DualSlopeRegressor(d0=d0, db=db, n_bins=n_bins, single_slope=single_slope)
    return reg.fit(series.distance_m, series.gain_db, series.censored).params_


# -- decorrelation distance ------------------------------------------------------


def empirical_autocorrelation(x, max_lag):
    """Normalized (biased) autocorrelation of a demeaned series for lags ``0..max_lag``."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.size
    nfft = 1 << int(math.ceil(math.log2(2 * n - 1)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    if acov[0] <= 0:
        raise NonIdentifiableError("series has zero variance")
    return acov / acov[0]


def fit_decorrelation(lags, acf, floor=math.exp(-2.0)):
    """Decorrelation distance from an autocorrelation curve.

    Returns ``(dc_fit, dc_crossing)``: the least-squares fit of
    ``exp(-lag/dc)`` over the lags before the curve first drops below
    ``floor``, and the interpolated lag where the curve reaches ``1/e``
    (NaN if it never does).
    """
    lags = np.asarray(lags, dtype=float)
    acf = np.asarray(acf, dtype=float)
    below = np.flatnonzero(acf < floor)
    stop = below[0] if below.size else acf.size
    stop = max(stop, 2)
    lx, ly = lags[:stop], acf[:stop]

    target = math.exp(-1.0)
    cross = np.flatnonzero(acf < target)
    if cross.size and cross[0] > 0:
        k = cross[0]
        dc_cross = lags[k - 1] + (acf[k - 1] - target) * (lags[k] - lags[k - 1]) / (acf[k - 1] - acf[k])
    elif cross.size:
        dc_cross = 0.0
    else:
        dc_cross = math.nan

    guess = dc_cross if np.isfinite(dc_cross) and dc_cross > 0 else max(lags[1], 1e-9)
    try:
        (dc,), _ = optimize.curve_fit(lambda t, c: np.exp(-t / c), lx, ly, p0=[guess], bounds=(1e-12, np.inf))
    except (RuntimeError, ValueError):
        dc = guess
    return float(dc), float(dc_cross)


class DecorrelationEstimator(BaseEstimator):
    """Decorrelation distance of a shadowing residual sampled along distance.

    Parameters
    ----------
    grid_step : float, optional
        Spacing (m) of the resampling grid; defaults to the median spacing
        of the input positions.
    max_lag_m : float, optional
        Largest lag considered; defaults to a tenth of the covered span.

    Attributes
    ----------
    dc_ : float
        Least-squares exponential fit.
    dc_crossing_ : float
        Lag where the autocorrelation reaches ``1/e``.
    lags_, acf_ : ndarray
    white_ : bool
        True when the fitted distance is below one grid step.
    """

    def __init__(self, grid_step=None, max_lag_m=None):
        self.grid_step = grid_step
        self.max_lag_m = max_lag_m

    def fit(self, positions, values):
        pos = check_1d(positions, "positions")
        x = check_1d(values, "values")
        if pos.size != x.size:
            raise ModelDomainError("positions and values must have equal length")
        if pos.size < 2:
            raise InsufficientDataError("need at least two samples")
        order = np.argsort(pos, kind="stable")
        pos, x = pos[order], x[order]
        step = self.grid_step
        if step is None:
            diffs = np.diff(pos)
            diffs = diffs[diffs > 0]
            if diffs.size == 0:
                raise InsufficientDataError("all samples share one position")
            step = float(np.median(diffs))
        check_positive(step, "grid_step")
        span = pos[-1] - pos[0]
        if span < 10.0 * step:
            raise InsufficientDataError(f"series spans {span:g} m, shorter than ten grid steps ({10 * step:g} m)")
        grid = pos[0] + step * np.arange(int(math.floor(span / step + 1e-9)) + 1)
        xs = np.interp(grid, pos, x)
        max_lag_m = self.max_lag_m if self.max_lag_m is not None else span / 10.0
        max_lag = int(min(max(max_lag_m / step, 2), grid.size - 1))
        self.acf_ = empirical_autocorrelation(xs, max_lag)
        self.lags_ = step * np.arange(max_lag + 1)
        self.dc_, self.dc_crossing_ = fit_decorrelation(self.lags_, self.acf_)
        self.grid_step_ = step
        self.white_ = self.dc_ < step
        return self


def estimate_decorrelation(positions, values, grid_step=None, max_lag_m=None):
    """Return the fitted decorrelation distance (m) of ``values`` sampled at ``positions``."""
    return DecorrelationEstimator(grid_step, max_lag_m).fit(positions, values).dc_
