"""Extremum location, anchored-linearity test, and monotonicity tests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaptrend import (
    AwbConfig,
    NoInteriorExtremumError,
    extremum_ci,
    linearity_test,
    local_extrema,
    monotonicity_tests,
    nw_estimate,
    trend_minimum,
    u_stat_bandwidth,
    u_stat_profiles,
)
from gaptrend.shapetests import TrendAnchor, nearest_extremum

from conftest import make_series, random_masked_series


def naive_u_profiles(obs_pos, y_obs, eval_pos, T, h_u):
    """Independent oracle: direct double sum over observed pairs."""
    u1 = np.zeros(eval_pos.shape[0])
    u2 = np.zeros(eval_pos.shape[0])
    scale = -2.0 / (T * (T - 1.0))
    for k, t in enumerate(eval_pos):
        w = np.zeros(obs_pos.shape[0])
        for i, p in enumerate(obs_pos):
            x = ((p - t) / T) / h_u
            if abs(x) < 1.0:
                w[i] = 0.75 * (1.0 - x * x) / h_u
        s1 = s2 = 0.0
        n = obs_pos.shape[0]
        for i in range(n):
            if w[i] == 0.0:
                continue
            for j in range(i + 1, n):
                if w[j] == 0.0:
                    continue
                diff = y_obs[j] - y_obs[i]
                s1 += np.sign(diff) * w[i] * w[j]
                s2 += diff * w[i] * w[j]
        u1[k] = scale * s1
        u2[k] = scale * s2
    return u1, u2


class TestBandwidth:
    def test_reference_values(self):
        assert round(u_stat_bandwidth(2935), 3) == 0.101
        assert round(u_stat_bandwidth(814), 3) == 0.131
        assert round(u_stat_bandwidth(1399), 3) == 0.117

    def test_validation(self):
        with pytest.raises(ValueError):
            u_stat_bandwidth(1)


class TestLocalExtrema:
    def test_example_sequence(self):
        g = np.array([3.0, 1.0, 2.0, 0.0, 5.0])
        assert local_extrema(g, "min").tolist() == [2, 4]
        assert local_extrema(g, "max").tolist() == [3]
        assert nearest_extremum(np.array([2, 4]), 4) == 4
        assert nearest_extremum(np.array([2, 4]), 1) == 2

    def test_tie_goes_to_earlier_index(self):
        assert nearest_extremum(np.array([2, 6]), 4) == 2

    def test_plateau_counted_once_at_first_position(self):
        g = np.array([1.0, 0.0, 0.0, 1.0])
        assert local_extrema(g, "min").tolist() == [2]

    def test_monotone_has_none(self):
        assert local_extrema(np.arange(6.0), "min").size == 0
        assert local_extrema(np.arange(6.0)[::-1], "min").size == 0

    def test_nan_gaps_use_defined_neighbours(self):
        g = np.array([3.0, np.nan, 1.0, np.nan, 2.0])
        assert local_extrema(g, "min").tolist() == [3]

    def test_kind_validation(self):
        with pytest.raises(ValueError):
            local_extrema(np.arange(4.0), "saddle")


def isolated_series(values_at_points, spacing=40):
    n = len(values_at_points)
    T = spacing * n
    mask = np.zeros(T, dtype=np.uint8)
    pos = np.arange(n) * spacing + spacing // 2
    mask[pos] = 1
    vals = np.zeros(T)
    vals[pos] = values_at_points
    return make_series(vals, mask)


class TestExtremumCi:
    def test_noiseless_v_degenerates_to_point(self):
        # Observed points spaced wider than every kernel window make the
        # pilot residuals exactly zero, so every replicate reproduces the
        # original trend.
        series = isolated_series([3.0, 2.0, 1.0, 2.0, 3.0])
        fit = nw_estimate(series, 0.03)
        res = extremum_ci(series, fit, AwbConfig(seed=2, n_boot=49), kind="min")
        assert res.location == res.lower_index == res.upper_index
        assert np.all(res.bootstrap_locations == res.location)
        assert res.value == 1.0

    def test_monotone_trend_raises(self):
        series = isolated_series([1.0, 2.0, 3.0, 4.0, 5.0])
        fit = nw_estimate(series, 0.03)
        with pytest.raises(NoInteriorExtremumError):
            extremum_ci(series, fit, AwbConfig(seed=2, n_boot=19), kind="min")

    def test_maximum_kind(self):
        series = isolated_series([1.0, 2.0, 4.0, 2.0, 1.0])
        fit = nw_estimate(series, 0.03)
        res = extremum_ci(series, fit, AwbConfig(seed=2, n_boot=29), kind="max")
        assert res.location == res.lower_index == res.upper_index
        assert res.value == 4.0

    def test_interval_orders_and_dates(self, rng):
        T = 300
        t = np.arange(1, T + 1) / T
        trend = (t - 0.5) ** 2 * 8.0
        series = make_series(trend + rng.normal(0, 0.3, T))
        fit = nw_estimate(series, 0.12)
        res = extremum_ci(series, fit, AwbConfig(seed=5, n_boot=99), kind="min")
        assert res.lower_index <= res.location <= res.upper_index
        assert res.lower_date <= res.date <= res.upper_date
        assert abs(res.location - 150) < 60

    def test_coverage_montecarlo(self):
        # Oracle: Monte Carlo coverage of the true minimum position for a
        # dip-shaped smooth trend.
        from gaptrend.mcharness import McDesign, SmoothTransitionSpec, bootstrap_config, simulate_series
        from gaptrend import gen_trend

        trend = SmoothTransitionSpec(base=2.0, shift1=-1.5, shift2=1.8,
                                     steepness=8.0, center1=0.25, center2=0.65)
        design = McDesign(n_time=400, missing="30%", phi=0.1, sigma_eta=0.4,
                          trend=trend, replications=300, n_boot=99, seed=41)
        truth = int(np.argmin(gen_trend(trend, 400))) + 1
        covered = n_ok = 0
        for draw in range(design.replications):
            series = simulate_series(design, draw)
            fit = nw_estimate(series, 0.1)
            try:
                res = extremum_ci(series, fit, bootstrap_config(design, draw), kind="min")
            except NoInteriorExtremumError:
                continue
            n_ok += 1
            covered += int(res.lower_index - 5 <= truth <= res.upper_index + 5)
        assert n_ok > 250
        assert covered / n_ok >= 0.88


class TestLinearityTest:
    def test_piecewise_linear_statistics_shrink_with_bandwidth(self):
        T = 200
        t = np.arange(1, T + 1, dtype=float)
        kink = 100
        values = np.where(t <= kink, kink - t, t - kink) / T
        series = make_series(values)
        fit = nw_estimate(series, 2.5 / T)
        anchor = TrendAnchor(location=kink, value=float(fit.g_hat[kink - 1]))
        res = linearity_test(series, fit, anchor, AwbConfig(seed=3, n_boot=29))
        spread = values.max() - values.min()
        assert res.q_sup < (spread * 0.05) ** 2
        assert res.q_ave <= res.q_sup

    def test_sup_dominates_ave(self, rng):
        series = random_masked_series(rng, 240, observed_fraction=0.7)
        fit = nw_estimate(series, 0.1)
        anchor = TrendAnchor(location=20, value=float(fit.g_hat[19]))
        res = linearity_test(series, fit, anchor, AwbConfig(seed=4, n_boot=39))
        assert 0.0 <= res.q_ave <= res.q_sup

    def test_requires_points_after_anchor(self, rng):
        series = random_masked_series(rng, 100)
        fit = nw_estimate(series, 0.1)
        with pytest.raises(ValueError, match="observed points after"):
            linearity_test(series, fit, TrendAnchor(99, 0.0), AwbConfig(seed=1, n_boot=9))
        with pytest.raises(ValueError, match="anchor position"):
            linearity_test(series, fit, TrendAnchor(150, 0.0), AwbConfig(seed=1, n_boot=9))

    def test_strong_curvature_rejected(self, rng):
        T = 400
        t = np.arange(1, T + 1) / T
        trend = 2.0 * np.sin(np.pi * t)  # rises then falls: nothing like a line
        series = make_series(trend + rng.normal(0, 0.15, T))
        fit = nw_estimate(series, 0.1)
        res = linearity_test(series, fit, trend_minimum(fit), AwbConfig(seed=6, n_boot=99))
        assert res.p_ave <= 0.05
        assert res.reject_ave

    def test_pvalue_convention(self, rng):
        series = random_masked_series(rng, 150, observed_fraction=0.8)
        fit = nw_estimate(series, 0.12)
        res = linearity_test(series, fit, trend_minimum(fit), AwbConfig(seed=7, n_boot=19))
        assert 1.0 / 20.0 <= res.p_ave <= 1.0
        assert 1.0 / 20.0 <= res.p_sup <= 1.0


class TestUStatistics:
    def test_strictly_increasing_series_negative_everywhere(self):
        T = 120
        series = make_series(np.arange(T, dtype=float))
        p1, p2 = u_stat_profiles(series, (15, 105))
        assert p1.max() < 0.0
        assert p2.max() < 0.0

    def test_matches_naive_oracle(self, rng):
        for _ in range(4):
            T = int(rng.integers(50, 160))
            series = random_masked_series(rng, T, observed_fraction=0.5)
            h_u = float(rng.uniform(0.08, 0.3))
            lo = int(rng.integers(1, T // 3))
            hi = int(rng.integers(2 * T // 3, T))
            p1, p2 = u_stat_profiles(series, (lo, hi), h_u)
            obs = np.flatnonzero(series.mask == 1)
            o1, o2 = naive_u_profiles(obs, series.values[obs], np.arange(lo - 1, hi), T, h_u)
            np.testing.assert_allclose(p1, o1, atol=1e-12)
            np.testing.assert_allclose(p2, o2, atol=1e-12)

    def test_masked_points_contribute_nothing(self, rng):
        # Doubling the grid with masked filler leaves the observed-pair sums
        # intact once the kernel rescaling of the denser grid is applied.
        T = 60
        series = random_masked_series(rng, T, observed_fraction=0.6)
        obs = np.flatnonzero(series.mask == 1)
        h_u = 0.2
        direct = naive_u_profiles(obs, series.values[obs], np.arange(9, 50), T, h_u)
        p1, p2 = u_stat_profiles(series, (10, 50), h_u)
        np.testing.assert_allclose(p1, direct[0], atol=1e-12)
        np.testing.assert_allclose(p2, direct[1], atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_sign_version_invariant_to_monotone_transforms(self, seed):
        rng = np.random.default_rng(seed)
        T = 50
        series = random_masked_series(rng, T, observed_fraction=0.7)
        base1, _ = u_stat_profiles(series, (5, 45), 0.25)
        for transform in (np.exp, lambda x: x**3 + 2 * x, lambda x: np.arctan(x) * 7):
            mapped = series.with_values(transform(series.values))
            p1, _ = u_stat_profiles(mapped, (5, 45), 0.25)
            np.testing.assert_array_equal(p1, base1)

    def test_magnitude_version_scale_and_shift(self, rng):
        series = random_masked_series(rng, 80, observed_fraction=0.6)
        _, base2 = u_stat_profiles(series, (10, 70), 0.2)
        _, shifted = u_stat_profiles(series.with_values(series.values + 11.0), (10, 70), 0.2)
        _, scaled = u_stat_profiles(series.with_values(series.values * 3.0), (10, 70), 0.2)
        np.testing.assert_allclose(shifted, base2, atol=1e-12)
        np.testing.assert_allclose(scaled, 3.0 * base2, rtol=1e-10, atol=1e-14)


class TestMonotonicityTests:
    def test_interval_validation(self, rng):
        series = random_masked_series(rng, 60)
        cfg = AwbConfig(seed=1, n_boot=9)
        with pytest.raises(ValueError, match="interval"):
            monotonicity_tests(series, (0, 50), cfg, h=0.1)
        with pytest.raises(ValueError, match="interval"):
            monotonicity_tests(series, (10, 61), cfg, h=0.1)

    def test_increasing_trend_not_rejected(self, rng):
        T = 300
        series = make_series(0.5 * np.arange(1, T + 1) / T + rng.normal(0, 0.1, T))
        res = monotonicity_tests(series, (30, 270), AwbConfig(seed=2, n_boot=49), h=0.1)
        assert res.u1 < res.cv1
        assert res.u2 < res.cv2
        assert not res.reject_sign and not res.reject_magnitude

    def test_clear_decline_rejected(self, rng):
        T = 300
        t = np.arange(1, T + 1) / T
        trend = np.where(t < 0.5, t, 1.0 - t) * 4.0
        series = make_series(trend + rng.normal(0, 0.1, T))
        res = monotonicity_tests(series, (30, 270), AwbConfig(seed=3, n_boot=99), h=0.08)
        assert res.reject_sign
        assert res.reject_magnitude
        assert res.p1 <= 0.05 and res.p2 <= 0.05

    def test_default_bandwidth_recorded(self, rng):
        series = random_masked_series(rng, 200)
        res = monotonicity_tests(series, (20, 180), AwbConfig(seed=4, n_boot=19), h=0.1)
        assert res.h_u == pytest.approx(u_stat_bandwidth(200))
        assert res.interval == (20, 180)

    def test_threads_identical(self, rng):
        series = random_masked_series(rng, 150)
        cfg = AwbConfig(seed=5, n_boot=24)
        a = monotonicity_tests(series, (15, 135), cfg, h=0.1, threads=1)
        b = monotonicity_tests(series, (15, 135), cfg, h=0.1, threads=3)
        assert np.array_equal(a.bootstrap_stats, b.bootstrap_stats)
