"""Kernel trend estimation, bandwidth cross-validation, and confidence bands."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

from gaptrend import (
    AwbConfig,
    bandwidth_grid,
    confidence_bands,
    mcv_scan,
    nw_estimate,
    pilot_bandwidth,
    pointwise_bands,
    simultaneous_bands,
)
from gaptrend.kerneltrend import BandResult

from conftest import make_series, random_masked_series


def naive_nw(values, mask, h, T):
    """Independent oracle: direct evaluation of the kernel-average formula."""
    out = np.full(T, np.nan)
    for t in range(1, T + 1):
        num = den = 0.0
        for s in range(1, T + 1):
            x = (s / T - t / T) / h
            if abs(x) <= 1.0 and mask[s - 1]:
                w = 0.75 * (1.0 - x * x)
                num += w * values[s - 1]
                den += w
        if den > 0:
            out[t - 1] = num / den
    return out


def naive_mcv(values, mask, h, k, T):
    """Independent oracle: leave-(2k+1)-out score by direct summation."""
    total = 0.0
    any_defined = False
    for t in range(1, T + 1):
        if not mask[t - 1]:
            continue
        num = den = 0.0
        for s in range(1, T + 1):
            if abs(s - t) <= k or not mask[s - 1]:
                continue
            x = (s / T - t / T) / h
            if abs(x) <= 1.0:
                w = 0.75 * (1.0 - x * x)
                num += w * values[s - 1]
                den += w
        if den > 0:
            any_defined = True
            total += (num / den - values[t - 1]) ** 2
    return total / T if any_defined else np.inf


class TestNwEstimate:
    def test_constant_series(self, rng):
        series = random_masked_series(rng, 80)
        series = make_series(np.full(80, 4.2), series.mask)
        fit = nw_estimate(series, 0.15)
        g = fit.g_hat[fit.defined]
        assert np.max(np.abs(g - 4.2)) < 1e-12

    def test_single_point_window(self):
        mask = np.zeros(101, dtype=np.uint8)
        mask[[10, 90]] = 1
        values = np.zeros(101)
        values[10], values[90] = 3.0, -1.5
        series = make_series(values, mask)
        fit = nw_estimate(series, 0.05)  # window of 5 grid steps each side
        assert fit.g_hat[10] == 3.0
        assert fit.g_hat[90] == -1.5
        assert np.isnan(fit.g_hat[50])  # desert gap flagged, not fabricated

    def test_toy_matches_hand_table(self):
        series = make_series([1.0, 2.0, 0.0, 4.0, 5.0], [1, 1, 0, 1, 1])
        fit = nw_estimate(series, 0.45)
        oracle = naive_nw(series.values, series.mask, 0.45, 5)
        np.testing.assert_allclose(fit.g_hat, oracle, atol=1e-12)

    def test_matches_oracle_random_instances(self, rng):
        for _ in range(5):
            T = int(rng.integers(20, 120))
            series = random_masked_series(rng, T, observed_fraction=0.5)
            h = float(rng.uniform(0.03, 0.4))
            fit = nw_estimate(series, h)
            oracle = naive_nw(series.values, series.mask, h, T)
            np.testing.assert_allclose(fit.g_hat, oracle, atol=1e-12, equal_nan=True)

    def test_convex_combination_bounds(self, rng):
        series = random_masked_series(rng, 150, observed_fraction=0.4)
        fit = nw_estimate(series, 0.1)
        obs_vals = series.values[series.mask == 1]
        g = fit.g_hat[fit.defined]
        assert g.min() >= obs_vals.min() - 1e-12
        assert g.max() <= obs_vals.max() + 1e-12

    def test_shift_and_scale_equivariance(self, rng):
        series = random_masked_series(rng, 100)
        fit = nw_estimate(series, 0.12)
        shifted = nw_estimate(series.with_values(series.values + 5.0), 0.12)
        scaled = nw_estimate(series.with_values(series.values * -2.5), 0.12)
        d = fit.defined
        np.testing.assert_allclose(shifted.g_hat[d], fit.g_hat[d] + 5.0, atol=1e-10)
        np.testing.assert_allclose(scaled.g_hat[d], fit.g_hat[d] * -2.5, atol=1e-10)

    def test_large_bandwidth_approaches_global_mean(self, rng):
        series = random_masked_series(rng, 120, observed_fraction=0.7)
        mean = series.values[series.mask == 1].mean()
        fit = nw_estimate(series, 50.0)
        spread = np.ptp(series.values[series.mask == 1])
        assert np.max(np.abs(fit.g_hat - mean)) < 2e-3 * max(spread, 1.0)

    def test_rejects_bad_inputs(self, rng):
        series = random_masked_series(rng, 30)
        with pytest.raises(ValueError):
            nw_estimate(series, 0.0)
        with pytest.raises(ValueError):
            nw_estimate(series, 0.1, kernel="gaussian")


class TestMcv:
    def test_k_zero_equals_leave_one_out(self, rng):
        # Oracle: an independently coded leave-one-out score.
        T = 50
        series = random_masked_series(rng, T, observed_fraction=0.8)
        for h in (0.1, 0.2, 0.35):
            res = mcv_scan(series, np.array([h]), k=0)
            assert res.scores[0] == pytest.approx(
                naive_mcv(series.values, series.mask, h, 0, T), rel=1e-10
            )

    def test_matches_oracle_general_k(self, rng):
        for _ in range(4):
            T = int(rng.integers(30, 90))
            series = random_masked_series(rng, T, observed_fraction=0.6)
            h = float(rng.uniform(0.08, 0.35))
            k = int(rng.integers(0, 6))
            res = mcv_scan(series, np.array([h]), k=k)
            oracle = naive_mcv(series.values, series.mask, h, k, T)
            assert res.scores[0] == pytest.approx(oracle, rel=1e-10)

    def test_monotone_increasing_curve_flagged(self, rng):
        # A steep smooth signal with faint noise always prefers the
        # smallest bandwidth, so the score curve has no interior minimum.
        T = 300
        t = np.arange(1, T + 1) / T
        series = make_series(np.sin(6 * np.pi * t) * 10 + rng.normal(0, 0.01, T))
        res = mcv_scan(series, bandwidth_grid(0.02, 0.12, 0.01), k=0)
        assert res.no_interior_minimum
        assert res.local_minima.size == 0
        with pytest.raises(ValueError, match="no interior"):
            res.pick(0)

    def test_inclusive_grid_count(self):
        grid = bandwidth_grid(0.01, 0.25, 0.005)
        assert grid.size == 49
        assert grid[0] == pytest.approx(0.01)
        assert grid[-1] == pytest.approx(0.25)

    def test_empty_leave_out_scores_infinite_with_warning(self, rng):
        series = random_masked_series(rng, 60)
        with pytest.warns(UserWarning, match="empty leave-out"):
            res = mcv_scan(series, np.array([0.03]), k=10)  # hole swallows the window
        assert np.isinf(res.scores[0])

    def test_multiple_minima_reported_and_pickable(self, rng):
        T = 240
        t = np.arange(1, T + 1) / T
        values = np.sin(2 * np.pi * t) + rng.normal(0, 0.4, T)
        series = make_series(values)
        res = mcv_scan(series, bandwidth_grid(0.02, 0.3, 0.02), k=2)
        if res.local_minima.size:
            picked = res.pick(0)
            assert picked.chosen == pytest.approx(res.grid[res.local_minima[0]])

    def test_default_leave_out_width(self):
        from gaptrend import default_leave_out

        assert default_leave_out(666) == int(np.ceil(1.75 * 666 ** (1 / 3)))


class TestPilotBandwidth:
    def test_formula(self):
        # Oracle: high-precision evaluation of 0.5 * h^(5/9).
        oracle = 0.5 * np.exp((5.0 / 9.0) * np.log(0.1))
        assert pilot_bandwidth(0.1) == pytest.approx(0.139128, abs=1e-6)
        assert pilot_bandwidth(0.1) == pytest.approx(oracle, abs=1e-14)
        assert pilot_bandwidth(0.1) > 0.1  # oversmoothing by construction


def isolated_v_series(spacing=30, n_points=9, h=0.05):
    """Observed points so far apart that each sits alone in every window,
    making the pilot residuals exactly zero."""
    T = spacing * n_points
    mask = np.zeros(T, dtype=np.uint8)
    positions = np.arange(n_points) * spacing + spacing // 2
    mask[positions] = 1
    depth = np.abs(np.arange(n_points) - n_points // 2).astype(float)
    values = np.zeros(T)
    values[positions] = depth
    return make_series(values, mask), positions


class TestBands:
    def test_zero_residuals_give_zero_width(self):
        series, _ = isolated_v_series()
        fit = nw_estimate(series, 0.02)
        band = pointwise_bands(series, fit, AwbConfig(seed=1, n_boot=29), level=0.95)
        d = fit.defined
        np.testing.assert_allclose(band.pointwise_lower[d], fit.g_hat[d], atol=1e-12)
        np.testing.assert_allclose(band.pointwise_upper[d], fit.g_hat[d], atol=1e-12)

    def test_simultaneous_contains_pointwise(self, rng):
        series = random_masked_series(rng, 200, observed_fraction=0.6)
        fit = nw_estimate(series, 0.1)
        band = simultaneous_bands(pointwise_bands(series, fit, AwbConfig(seed=2, n_boot=99)))
        d = fit.defined
        assert np.all(band.lower[d] <= band.pointwise_lower[d] + 1e-12)
        assert np.all(band.upper[d] >= band.pointwise_upper[d] - 1e-12)
        assert np.all(band.pointwise_lower[d] <= fit.g_hat[d] + 1e-12)
        assert np.all(band.pointwise_upper[d] >= fit.g_hat[d] - 1e-12)
        assert band.alpha_s <= 1.0 - band.level + 1e-12

    def test_band_level_nesting(self, rng):
        series = random_masked_series(rng, 150, observed_fraction=0.7)
        fit = nw_estimate(series, 0.12)
        cfg = AwbConfig(seed=3, n_boot=199)
        b95 = confidence_bands(series, fit, cfg, level=0.95)
        b99 = confidence_bands(series, fit, cfg, level=0.99)
        d = fit.defined
        assert np.all(b99.lower[d] <= b95.lower[d] + 1e-12)
        assert np.all(b99.upper[d] >= b95.upper[d] - 1e-12)

    def test_alpha_s_matches_brute_force_on_toy(self):
        # Oracle: exhaustive scan over the admissible pointwise rates.
        rng = np.random.default_rng(7)
        B, T = 40, 6
        dev = rng.normal(size=(B, T))
        g = np.zeros(T)
        band = BandResult(
            level=0.75, alpha_s=0.25, g_hat=g,
            lower=g.copy(), upper=g.copy(),
            pointwise_lower=g.copy(), pointwise_upper=g.copy(),
            deviations=dev,
        )
        out = simultaneous_bands(band)

        def coverage(ap):
            lo_i = min(max(int(np.ceil(ap / 2 * B)) - 1, 0), B - 1)
            hi_i = min(max(int(np.ceil((1 - ap / 2) * B)) - 1, 0), B - 1)
            s = np.sort(dev, axis=0)
            inside = (dev >= s[lo_i]) & (dev <= s[hi_i])
            return inside.all(axis=1).mean()

        grid = [k / B for k in range(1, int(np.floor(B * 0.25)) + 1)]
        scores = [abs(coverage(ap) - 0.75) for ap in grid]
        best = grid[int(np.argmin(scores))]
        assert out.alpha_s == pytest.approx(best)

    def test_widest_band_warning_when_level_unreachable(self, rng):
        dev = rng.normal(size=(9, 4))
        g = np.zeros(4)
        band = BandResult(
            level=0.99, alpha_s=0.01, g_hat=g,
            lower=g.copy(), upper=g.copy(),
            pointwise_lower=g.copy(), pointwise_upper=g.copy(),
            deviations=dev,
        )
        with pytest.warns(UserWarning):
            out = simultaneous_bands(band)
        assert out.alpha_s == pytest.approx(1.0 / 9.0)

    def test_pointwise_coverage_montecarlo(self):
        # Oracle: Monte Carlo coverage of the true trend value at mid-sample.
        from gaptrend.mcharness import McDesign, SmoothTransitionSpec, bootstrap_config, simulate_series

        design = McDesign(
            n_time=400, missing="30%", phi=0.1, sigma_eta=0.5,
            trend=SmoothTransitionSpec(), replications=300, n_boot=199, seed=31,
        )
        from gaptrend import gen_trend

        truth = gen_trend(design.trend, 400)
        mid = 199
        covered = n_ok = 0
        for draw in range(design.replications):
            series = simulate_series(design, draw)
            fit = nw_estimate(series, 0.1)
            if not np.isfinite(fit.g_hat[mid]):
                continue
            band = pointwise_bands(series, fit, bootstrap_config(design, draw), level=0.95)
            n_ok += 1
            covered += int(band.pointwise_lower[mid] <= truth[mid] <= band.pointwise_upper[mid])
        assert n_ok > 250
        assert 0.88 <= covered / n_ok <= 0.99

    def test_horizontal_line_rarely_fits_in_band_on_trending_data(self):
        # A flat line should almost never embed in the band over a
        # segment where the trend clearly rises.
        from gaptrend.mcharness import LinearTrendSpec, McDesign, bootstrap_config, simulate_series

        design = McDesign(
            n_time=300, missing="30%", phi=0.1, sigma_eta=0.35,
            trend=LinearTrendSpec(0.0, 1.5, 0.0, 0.5, "rescaled"),
            replications=60, n_boot=99, seed=37,
        )
        embeds = 0
        for draw in range(design.replications):
            series = simulate_series(design, draw)
            fit = nw_estimate(series, 0.1)
            band = confidence_bands(series, fit, bootstrap_config(design, draw), level=0.95)
            seg = slice(60, 240)
            lo, hi = band.lower[seg], band.upper[seg]
            ok = np.isfinite(lo) & np.isfinite(hi)
            embeds += int(np.nanmax(lo[ok]) <= np.nanmin(hi[ok]))
        assert embeds / design.replications <= 0.15

    def test_missing_deviations_rejected(self):
        g = np.zeros(3)
        band = BandResult(level=0.9, alpha_s=0.1, g_hat=g, lower=g, upper=g,
                          pointwise_lower=g, pointwise_upper=g, deviations=None)
        with pytest.raises(ValueError, match="deviations"):
            simultaneous_bands(band)
