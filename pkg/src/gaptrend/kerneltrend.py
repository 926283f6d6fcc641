"""Nonparametric trend: local-constant kernel smoothing on the full daily
grid, bandwidth selection by leave-(2k+1)-out cross-validation, and bootstrap
pointwise intervals calibrated into simultaneous confidence bands.

All smoothing runs in rescaled time t/T with an Epanechnikov kernel. Grid
positions whose kernel window contains no observation (long gaps wider than
the window) are reported as undefined rather than filled in.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .awb import AwbConfig, run_replicates
from .series import ObservedSeries

EPANECHNIKOV = "epanechnikov"


def _kernel_weights(h: float, n_time: int) -> np.ndarray:
    """Epanechnikov weights at integer grid offsets covering |offset| <= h*T."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    m = h * n_time
    half = int(np.floor(m))
    j = np.arange(-half, half + 1, dtype=np.float64)
    w = 0.75 * (1.0 - (j / m) ** 2)
    return np.maximum(w, 0.0)


def _nw_parts(mask_f: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Kernel weight vector and per-position observed weight sums."""
    w = _kernel_weights(h, mask_f.shape[0])
    den = correlate1d(mask_f, w, mode="constant", cval=0.0)
    return w, den


def _nw_apply(masked_values: np.ndarray, w: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = correlate1d(masked_values, w, mode="constant", cval=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = num / den
    g[den <= 0.0] = np.nan
    return g


@dataclass(frozen=True)
class KernelTrendFit:
    """Local-constant trend estimate on the full grid.

    ``g_hat`` is NaN wherever the kernel window holds no observation;
    every defined value is a convex combination of observed points.
    """

    g_hat: np.ndarray
    h: float
    kernel: str = EPANECHNIKOV

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.g_hat)


def nw_estimate(eps: ObservedSeries, h: float, kernel: str = EPANECHNIKOV) -> KernelTrendFit:
    """Kernel-weighted local average of the observed points at t/T, t = 1..T."""
    if kernel != EPANECHNIKOV:
        raise ValueError(f"unsupported kernel {kernel!r}")
    mask_f = eps.mask.astype(np.float64)
    w, den = _nw_parts(mask_f, h)
    g = _nw_apply(eps.masked_values(), w, den)
    return KernelTrendFit(g_hat=g, h=float(h), kernel=kernel)


def default_leave_out(n_time: int) -> int:
    """Leave-out half-width matched to the bootstrap dependence length."""
    return int(np.ceil(1.75 * n_time ** (1.0 / 3.0)))


@dataclass(frozen=True)
class McvResult:
    """Cross-validation scores over a bandwidth grid.

    The score curve can have several local minima; all of them are
    reported and the choice is left to the caller. ``chosen`` stays None
    until a bandwidth is picked explicitly.
    """

    grid: np.ndarray
    scores: np.ndarray
    k: int
    local_minima: np.ndarray  # indices into grid
    no_interior_minimum: bool
    chosen: float | None = None

    def pick(self, which: int) -> "McvResult":
        """Return a copy with the ``which``-th local minimum chosen (0-based)."""
        if self.no_interior_minimum:
            raise ValueError("score curve has no interior local minimum")
        if not 0 <= which < self.local_minima.size:
            raise ValueError(f"minimum index {which} out of range")
        h = float(self.grid[self.local_minima[which]])
        return McvResult(self.grid, self.scores, self.k, self.local_minima,
                         self.no_interior_minimum, chosen=h)


def mcv_scan(eps: ObservedSeries, grid: np.ndarray, k: int | None = None) -> McvResult:
    """Leave-(2k+1)-out cross-validation of the trend bandwidth.

    For each candidate bandwidth the estimator at t/T omits every
    position within k grid steps of t, blunting the tendency of
    dependent errors to drag the choice toward undersmoothing. k = 0 is
    classical leave-one-out.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty bandwidth grid")
    if k is None:
        k = default_leave_out(len(eps))
    if k < 0:
        raise ValueError("k must be >= 0")

    T = len(eps)
    mask_f = eps.mask.astype(np.float64)
    mval = eps.masked_values()
    obs = eps.mask == 1
    scores = np.empty(grid.size)
    for i, h in enumerate(grid):
        w = _kernel_weights(h, T)
        half = (w.shape[0] - 1) // 2
        hole = w[max(half - k, 0): half + k + 1]
        num = correlate1d(mval, w, mode="constant", cval=0.0) - correlate1d(
            mval, hole, mode="constant", cval=0.0
        )
        den = correlate1d(mask_f, w, mode="constant", cval=0.0) - correlate1d(
            mask_f, hole, mode="constant", cval=0.0
        )
        ok = obs & (den > 0.0)
        if not ok.any():
            warnings.warn(
                f"bandwidth {h:g}: every evaluation point has an empty leave-out window",
                stacklevel=2,
            )
            scores[i] = np.inf
            continue
        g = np.zeros(T)
        g[ok] = num[ok] / den[ok]
        scores[i] = float(((g[ok] - eps.values[ok]) ** 2).sum()) / T

    interior = np.flatnonzero(
        (scores[1:-1] < scores[:-2]) & (scores[1:-1] <= scores[2:])
    ) + 1 if scores.size >= 3 else np.empty(0, dtype=np.int64)
    return McvResult(
        grid=grid,
        scores=scores,
        k=k,
        local_minima=np.asarray(interior, dtype=np.int64),
        no_interior_minimum=interior.size == 0,
    )


def bandwidth_grid(lo: float = 0.01, hi: float = 0.25, step: float = 0.005) -> np.ndarray:
    """Inclusive bandwidth grid lo, lo+step, ..., hi."""
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def pilot_bandwidth(h: float) -> float:
    """Oversmoothing bandwidth 0.5 * h^(5/9) used to form bootstrap residuals."""
    return 0.5 * h ** (5.0 / 9.0)


@dataclass(frozen=True)
class BandResult:
    """Pointwise intervals and simultaneous bands for the trend curve.

    ``alpha_s`` is the calibrated pointwise error rate whose per-point
    intervals hold jointly at the requested level; it never exceeds
    1 - level, so the simultaneous band contains the pointwise band.
    ``deviations`` keeps the centered bootstrap paths for reuse.
    """

    level: float
    alpha_s: float
    g_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    pointwise_lower: np.ndarray
    pointwise_upper: np.ndarray
    deviations: np.ndarray = field(repr=False, default=None)


def _column_quantiles(paths: np.ndarray, alpha: float) -> np.ndarray:
    """Per-column left-continuous empirical quantiles of a (B, T) matrix."""
    B = paths.shape[0]
    idx = min(max(int(np.ceil(alpha * B)) - 1, 0), B - 1)
    return np.sort(paths, axis=0)[idx]


def trend_bootstrap_paths(
    eps: ObservedSeries,
    fit: KernelTrendFit,
    cfg: AwbConfig,
    regenerate_trend: np.ndarray | None = None,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Bootstrap trend re-estimates around an oversmoothed pilot.

    Residuals are taken from the pilot fit at bandwidth 0.5 * h^(5/9);
    replicate series are rebuilt as mask * (trend + multiplier * residual),
    where ``regenerate_trend`` defaults to the pilot itself (pass zeros to
    impose a flat null), and re-smoothed at the original bandwidth.

    Returns (pilot values, (B, T) matrix of replicate trend estimates).
    """
    T = len(eps)
    mask_f = eps.mask.astype(np.float64)
    pilot = _nw_apply(eps.masked_values(), *_nw_parts(mask_f, pilot_bandwidth(fit.h)))
    u_hat = np.where(eps.mask == 1, eps.values - pilot, 0.0)
    trend = pilot if regenerate_trend is None else np.asarray(regenerate_trend, dtype=np.float64)
    trend_masked = np.where(eps.mask == 1, trend, 0.0)
    w, den = _nw_parts(mask_f, fit.h)

    def kernel(_b: int, xi: np.ndarray) -> np.ndarray:
        eps_star = trend_masked + mask_f * xi * u_hat
        return _nw_apply(eps_star, w, den)

    paths = run_replicates(cfg, T, kernel, threads=threads)
    return pilot, paths


def pointwise_bands(
    eps: ObservedSeries,
    fit: KernelTrendFit,
    cfg: AwbConfig | None = None,
    level: float = 0.95,
    threads: int = 1,
) -> BandResult:
    """Pointwise bootstrap intervals for the trend at every defined position.

    The interval at t/T is [g - q(1-a/2), g - q(a/2)] formed from the
    replicate deviations around the oversmoothed pilot. The returned
    result carries the deviation paths; feed it to
    :func:`simultaneous_bands` to calibrate joint coverage.
    """
    cfg = cfg or AwbConfig()
    pilot, paths = trend_bootstrap_paths(eps, fit, cfg, threads=threads)
    deviations = paths - pilot
    a = 1.0 - level
    lo = _column_quantiles(deviations, a / 2.0)
    hi = _column_quantiles(deviations, 1.0 - a / 2.0)
    lower = fit.g_hat - hi
    upper = fit.g_hat - lo
    return BandResult(
        level=level,
        alpha_s=a,
        g_hat=fit.g_hat,
        lower=lower.copy(),
        upper=upper.copy(),
        pointwise_lower=lower,
        pointwise_upper=upper,
        deviations=deviations,
    )


def simultaneous_bands(band: BandResult, level: float | None = None) -> BandResult:
    """Calibrate the pointwise error rate until bands hold jointly.

    Scans candidate pointwise rates a_p in [1/B, alpha] and, for each,
    counts the fraction of bootstrap deviation paths lying inside their
    per-point intervals at every defined position simultaneously. The
    rate whose joint coverage is closest to the target becomes alpha_s
    (ties to the widest band). If even 1/B under-covers, the widest band
    is returned with a warning.
    """
    if band.deviations is None:
        raise ValueError("band result carries no bootstrap deviations")
    level = band.level if level is None else level
    alpha = 1.0 - level
    dev = band.deviations
    B = dev.shape[0]
    defined = np.isfinite(band.g_hat) & np.isfinite(dev).all(axis=0)
    D = dev[:, defined]
    Ds = np.sort(D, axis=0)

    ks = np.arange(1, int(np.floor(B * alpha)) + 1)
    grid = list(ks / B)
    if not grid:
        warnings.warn(
            f"target level {level:g} finer than 1/B with B={B}; using the widest band",
            stacklevel=2,
        )
        grid = [1.0 / B]
    elif grid[-1] < alpha:
        grid.append(alpha)

    def row(a: float, upper_tail: bool) -> np.ndarray:
        q = 1.0 - a / 2.0 if upper_tail else a / 2.0
        idx = min(max(int(np.ceil(q * B)) - 1, 0), B - 1)
        return Ds[idx]

    best_ap, best_score, best_cov = None, np.inf, 0.0
    for ap in grid:
        lo, hi = row(ap, False), row(ap, True)
        inside = ((D >= lo) & (D <= hi)).all(axis=1).mean()
        score = abs(inside - level)
        if score < best_score:
            best_ap, best_score, best_cov = ap, score, inside
    if best_cov < level and best_ap == grid[0]:
        warnings.warn(
            f"joint coverage {best_cov:.3f} below {level:g} even at the widest "
            "admissible band",
            stacklevel=2,
        )

    lo = _column_quantiles(dev, best_ap / 2.0)
    hi = _column_quantiles(dev, 1.0 - best_ap / 2.0)
    return BandResult(
        level=level,
        alpha_s=float(best_ap),
        g_hat=band.g_hat,
        lower=band.g_hat - hi,
        upper=band.g_hat - lo,
        pointwise_lower=band.pointwise_lower,
        pointwise_upper=band.pointwise_upper,
        deviations=dev,
    )


def confidence_bands(
    eps: ObservedSeries,
    fit: KernelTrendFit,
    cfg: AwbConfig | None = None,
    level: float = 0.95,
    threads: int = 1,
) -> BandResult:
    """Pointwise intervals plus calibrated simultaneous bands in one call."""
    return simultaneous_bands(pointwise_bands(eps, fit, cfg, level, threads))
