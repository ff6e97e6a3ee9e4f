import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from v2vshadow.estimation import (
    CensoredNormalEM,
    CirTrace,
    DecorrelationEstimator,
    DualSlopeRegressor,
    GainSeries,
    channel_gain,
    compute_apdp,
    em_censored_lognormal,
    estimate_decorrelation,
    fit_decorrelation,
    fit_dual_slope,
    pathloss_from_gain,
)
from v2vshadow.exceptions import InsufficientDataError, ModelDomainError, NonIdentifiableError
from v2vshadow.propagation import PathLossParams, dual_slope_gain_db
from v2vshadow.synthetic import gain_series, rayleigh_cir, shadow_trajectory

TRUTH = PathLossParams(n1=-1.66, n2=-2.88, pl0_db=-66.1, sigma_db=4.0)


def censor(x, threshold):
    obs = x[x >= threshold]
    return obs, x.size - obs.size


class TestApdp:
    def test_constant_unit_tap(self):
        h = np.zeros((20, 5), complex)
        h[:, 2] = np.exp(1j * np.linspace(0, 6, 20))
        p = compute_apdp(CirTrace(h, 1e-3, 1e-8), 5)
        assert p.shape == (4, 5)
        np.testing.assert_allclose(p[:, 2], 1.0, rtol=1e-12)
        assert np.all(p[:, [0, 1, 3, 4]] == 0)

    def test_single_snapshot_average_is_instantaneous(self, rng):
        h = rng.normal(size=(7, 4)) + 1j * rng.normal(size=(7, 4))
        np.testing.assert_allclose(compute_apdp(CirTrace(h, 1e-3, 1e-8), 1), np.abs(h) ** 2, rtol=1e-12)

    def test_trailing_partial_block_dropped(self):
        p = compute_apdp(np.ones((10, 3)), 4)
        assert p.shape == (2, 3)

    @pytest.mark.parametrize("n_avg", [1, 4, 16])
    def test_rayleigh_variance_shrinks_with_averaging(self, n_avg):
        cir = rayleigh_cir(n_avg * 20_000, [1.0], seed=n_avg)
        p = compute_apdp(cir, n_avg)[:, 0]
        # exponential power: unit mean and unit variance per snapshot
        assert p.var() == pytest.approx(1.0 / n_avg, rel=0.05)

    @pytest.mark.parametrize("n_avg", [0, 11])
    def test_invalid_n_avg(self, n_avg):
        with pytest.raises(ModelDomainError):
            compute_apdp(np.ones((10, 3)), n_avg)

    def test_empty_trace(self):
        with pytest.raises(ModelDomainError):
            compute_apdp(np.ones((0, 3)), 1)


class TestChannelGain:
    def test_two_half_taps(self):
        assert channel_gain([0.5, 0.5], noise_floor_db=-100) == pytest.approx(0.0, abs=1e-12)

    def test_all_below_threshold_is_censored(self):
        assert math.isnan(channel_gain([1e-12, 1e-11], noise_floor_db=-100))

    def test_mixed_taps(self, rng):
        pdp = 10 ** (rng.uniform(-110, -80, (50, 30)) / 10)
        thr = 10 ** (-97 / 10)
        expected = [10 * math.log10(sum(v for v in row if v >= thr)) for row in pdp]
        np.testing.assert_allclose(channel_gain(pdp, -100.0), expected, rtol=1e-12)

    def test_margin(self):
        # a tap 2 dB above the floor falls under the default 3 dB margin
        tap = 10 ** (-98 / 10)
        assert math.isnan(channel_gain([tap], -100.0))
        assert channel_gain([tap], -100.0, margin_db=1.0) == pytest.approx(-98.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-12, 1.0), min_size=1, max_size=20), st.randoms())
    def test_invariant_to_tap_order(self, taps, rnd):
        shuffled = list(taps)
        rnd.shuffle(shuffled)
        a, b = channel_gain(taps, -90.0), channel_gain(shuffled, -90.0)
        assert (math.isnan(a) and math.isnan(b)) or a == pytest.approx(b, abs=1e-9)


class TestPathLoss:
    def test_example(self):
        assert pathloss_from_gain(-80.0, 3.7, 0.0) == pytest.approx(87.4)

    def test_zero(self):
        assert pathloss_from_gain(0.0, 0.0, 0.0) == 0.0

    @settings(max_examples=50)
    @given(st.floats(-150, 0), st.floats(-5, 10), st.floats(0, 5))
    def test_affine(self, g, ga, pil):
        base = pathloss_from_gain(g, ga, pil)
        assert pathloss_from_gain(g + 1, ga, pil) == pytest.approx(base - 1)
        assert pathloss_from_gain(g, ga + 1, pil) == pytest.approx(base + 2)
        assert pathloss_from_gain(g, ga, pil + 1) == pytest.approx(base - 1)


class TestDualSlopeFit:
    def test_noiseless_round_trip(self):
        d = np.geomspace(10, 1000, 5000)
        reg = DualSlopeRegressor().fit(d, dual_slope_gain_db(TRUTH, d))
        assert abs(reg.n1_ - TRUTH.n1) < 1e-9
        assert abs(reg.n2_ - TRUTH.n2) < 1e-9
        assert abs(reg.pl0_ - TRUTH.pl0_db) < 1e-9
        np.testing.assert_allclose(reg.predict(d), dual_slope_gain_db(TRUTH, d), atol=1e-9)

    def test_noisy_fit_within_three_standard_errors(self):
        # standard errors of the estimator from 100 independent data sets of 10^4 points
        fits = np.array([
            [p.n1, p.n2, p.pl0_db]
            for p in (fit_dual_slope(gain_series(TRUTH, n_runs=10, seed=s)) for s in range(100))
        ])
        se = fits.std(axis=0, ddof=1)
        truth = np.array([TRUTH.n1, TRUTH.n2, TRUTH.pl0_db])
        assert np.all(np.abs(fits[0] - truth) < 3 * se)
        assert np.all(np.abs(fits.mean(axis=0) - truth) < 3 * se / math.sqrt(len(fits)))

    def test_sigma_is_residual_spread(self):
        series = gain_series(TRUTH, n_runs=10, seed=3)
        reg = DualSlopeRegressor().fit(series.distance_m, series.gain_db)
        assert reg.sigma_ == pytest.approx(TRUTH.sigma_db, rel=0.05)

    def test_equal_slopes(self):
        same = PathLossParams(n1=-2.0, n2=-2.0, pl0_db=-60.0, sigma_db=3.0)
        p = fit_dual_slope(gain_series(same, n_runs=10, seed=4))
        assert p.n1 == pytest.approx(p.n2, abs=0.1)

    def test_single_slope_option(self):
        same = PathLossParams(n1=None, n2=-2.5, pl0_db=-60.0, sigma_db=3.0)
        p = fit_dual_slope(gain_series(same, n_runs=10, seed=4), single_slope=True)
        assert p.n1 is None and p.n2 == pytest.approx(-2.5, abs=0.05)

    def test_censored_samples_use_em_sigma(self):
        series = gain_series(TRUTH, n_runs=10, seed=5, noise_floor_db=-115.0)
        assert 0.01 < series.censored.mean() < 0.2
        reg = DualSlopeRegressor().fit(series.distance_m, series.gain_db, series.censored)
        assert reg.sigma_ == pytest.approx(TRUTH.sigma_db, rel=0.05)
        assert reg.n2_ == pytest.approx(TRUTH.n2, abs=0.1)

    def test_insufficient_bins_names_the_side(self):
        d = np.geomspace(10, 90, 500)
        with pytest.raises(InsufficientDataError, match="deficient: above"):
            DualSlopeRegressor().fit(d, dual_slope_gain_db(TRUTH, d))

    def test_estimator_api(self):
        reg = DualSlopeRegressor(n_bins=30)
        assert reg.get_params()["n_bins"] == 30
        assert clone(reg).get_params() == reg.get_params()
        d = np.geomspace(10, 1000, 2000)
        y = dual_slope_gain_db(TRUTH, d)
        assert reg.fit(d, y).score(d, y) == pytest.approx(1.0)


class TestCensoredEm:
    def test_no_censoring_is_sample_mle(self, rng):
        x = rng.normal(-90, 6, 500)
        mu, sigma = em_censored_lognormal(x, 0, None)
        assert mu == pytest.approx(x.mean(), abs=1e-12)
        assert sigma == pytest.approx(x.std(), abs=1e-12)

    def test_recovery_and_monotone_likelihood(self):
        x = np.random.default_rng(7).normal(-90.0, 6.0, 10_000)
        obs, n_c = censor(x, -100.0)
        assert 0.03 < n_c / x.size < 0.07
        em = CensoredNormalEM().fit(obs, n_c, -100.0)
        assert em.converged_
        assert abs(em.mu_ + 90.0) <= 0.3 and abs(em.sigma_ - 6.0) <= 0.3
        assert np.all(np.diff(em.loglik_) >= -1e-9)

    def test_naive_estimate_is_biased(self):
        x = np.random.default_rng(8).normal(-90.0, 6.0, 10_000)
        obs, n_c = censor(x, -95.0)
        em = CensoredNormalEM().fit(obs, n_c, -95.0)
        assert abs(em.mu_ + 90) < abs(obs.mean() + 90)
        assert abs(em.sigma_ - 6) < abs(obs.std() - 6)

    def test_variance_grows_with_censoring(self):
        draws = np.random.default_rng(9).normal(-90.0, 6.0, (100, 1000))
        spread = []
        for thr in (-110.0, -96.0, -90.0, -84.0):
            mus = [CensoredNormalEM().fit(*censor(x, thr), thr).mu_ for x in draws]
            spread.append(np.var(mus))
        assert all(a < b for a, b in zip(spread, spread[1:])), spread

    def test_all_censored(self):
        with pytest.raises(NonIdentifiableError):
            CensoredNormalEM().fit([], 10, -100.0)

    def test_one_observation(self):
        with pytest.raises(NonIdentifiableError):
            CensoredNormalEM().fit([1.0], 10, -100.0)

    def test_threshold_required(self):
        with pytest.raises(ModelDomainError):
            CensoredNormalEM().fit([1.0, 2.0], 3)

    def test_per_sample_thresholds(self):
        x = np.random.default_rng(10).normal(0.0, 1.0, 5000)
        thr = np.where(np.arange(5000) % 2 == 0, -1.0, -0.5)
        cens = x < thr
        em = CensoredNormalEM().fit(x[~cens], int(cens.sum()), thr[cens])
        assert em.mu_ == pytest.approx(0.0, abs=0.05) and em.sigma_ == pytest.approx(1.0, abs=0.05)


class TestDecorrelation:
    def test_exact_exponential(self):
        lags = np.arange(0, 200, 1.0)
        dc, cross = fit_decorrelation(lags, np.exp(-lags / 23.3))
        assert dc == pytest.approx(23.3, rel=0.01)
        assert cross == pytest.approx(23.3, rel=0.01)

    def test_white_input_flagged(self, rng):
        est = DecorrelationEstimator().fit(np.arange(5000.0), rng.normal(size=5000))
        assert est.dc_ < est.grid_step_ and est.white_

    def test_ar_round_trip(self):
        pos, x = shadow_trajectory(6.12, 32.5, 32.5 / 4, 100_000, seed=11)
        assert estimate_decorrelation(pos, x) == pytest.approx(32.5, rel=0.10)

    def test_irregular_positions_are_resampled(self):
        pos, x = shadow_trajectory(3.0, 23.3, 1.0, 50_000, seed=12)
        keep = np.sort(np.random.default_rng(0).choice(pos.size, 30_000, replace=False))
        est = DecorrelationEstimator(grid_step=1.0).fit(pos[keep], x[keep])
        assert est.dc_ == pytest.approx(23.3, rel=0.10)

    def test_short_series(self):
        with pytest.raises(InsufficientDataError):
            estimate_decorrelation(np.arange(5.0), np.arange(5.0))


class TestIo:
    def test_gain_csv_round_trip(self, tmp_path):
        s = gain_series(TRUTH, n_runs=1, seed=1, noise_floor_db=-120.0)
        s.to_csv(tmp_path / "g.csv")
        back = GainSeries.from_csv(tmp_path / "g.csv")
        assert np.array_equal(back.distance_m, s.distance_m)
        assert np.array_equal(back.gain_db, s.gain_db)
        assert np.array_equal(back.censored, s.censored)

    def test_gain_csv_missing_column(self, tmp_path):
        (tmp_path / "bad.csv").write_text("distance_m,power\n10,1\n")
        with pytest.raises(ModelDomainError):
            GainSeries.from_csv(tmp_path / "bad.csv")

    def test_cir_binary_round_trip(self, tmp_path):
        cir = rayleigh_cir(17, [1.0, 0.5, 0.1], dt=2e-4, dtau=5e-8, seed=2)
        cir.save(tmp_path / "c.bin")
        back = CirTrace.load(tmp_path / "c.bin")
        assert np.array_equal(back.h, cir.h) and back.dt == cir.dt and back.dtau == cir.dtau

    def test_cir_layout(self):
        cir = CirTrace(np.array([[1 + 2j, 3 - 4j]]), 1.0, 0.5)
        data = cir.to_bytes()
        assert len(data) == 32 + 32
        assert np.array_equal(np.frombuffer(data[32:], "<f8"), [1, 2, 3, -4])

    def test_cir_truncated(self):
        data = CirTrace(np.ones((2, 2)), 1.0, 1.0).to_bytes()
        with pytest.raises(ModelDomainError):
            CirTrace.from_bytes(data[:-8])
