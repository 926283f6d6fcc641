"""Continuous broken linear trend: estimation, break test, bootstrap intervals.

The trend is linear with one slope change at an unknown grid position; the
hinge regressor keeps the fitted line continuous at the break. Estimation
minimizes the mask-weighted sum of squared residuals jointly over the trend,
the slope change, and the seasonal harmonics, scanning every admissible
break candidate. The scan exploits the fact that only the hinge column
changes between candidates: with the fixed-column Gram matrix factorized
once, each candidate costs a rank-one update built from suffix sums, so a
full scan is O(T + |candidates| * p^2) instead of |candidates| full refits.
"""

from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .awb import AwbConfig, empirical_quantile, run_replicates
from .exceptions import SingularDesignError
from .seasonal import SeasonalFit, fourier_design
from .series import ObservedSeries

DEFAULT_TRIM_FRACTION = 0.1

# Reductions below this fraction of the total sum of squares are numerical
# noise from the least-squares solve, not evidence of a break.
_NOISE_FLOOR = 1e-20
# A candidate whose hinge column is this close to the span of the fixed
# columns (Schur complement relative to the raw hinge norm) is unidentified.
_SCHUR_RTOL = 1e-10


@dataclass(frozen=True)
class TrimmingSet:
    """Admissible break positions, bounded away from both sample ends."""

    fraction: float
    candidates: np.ndarray  # 1-based grid positions, ascending

    @property
    def lo(self) -> int:
        return int(self.candidates[0])

    @property
    def hi(self) -> int:
        return int(self.candidates[-1])


def trimming_set(n_time: int, fraction: float = DEFAULT_TRIM_FRACTION) -> TrimmingSet:
    """Candidates ceil(fraction*T) .. floor((1-fraction)*T)."""
    if not 0.0 < fraction < 0.5:
        raise ValueError("trimming fraction must lie in (0, 0.5)")
    lo = int(np.ceil(fraction * n_time))
    hi = int(np.floor((1.0 - fraction) * n_time))
    if lo < 1 or hi > n_time - 1 or lo > hi:
        raise ValueError(f"empty trimming set for T={n_time}, fraction={fraction}")
    return TrimmingSet(fraction=fraction, candidates=np.arange(lo, hi + 1))


@dataclass(frozen=True)
class BrokenTrendFit:
    """Joint fit of intercept, slopes, break position, and seasonal pattern.

    ``beta`` and ``delta`` are per grid step; multiply by 365.25 (or divide
    by the series grid_step) for per-year rates. The fitted trend is
    continuous at ``break_index`` by construction of the hinge regressor.
    """

    alpha: float
    beta: float
    delta: float
    break_index: int
    seasonal: SeasonalFit
    ssr: float
    n_time: int

    def trend_values(self) -> np.ndarray:
        t = np.arange(1, self.n_time + 1, dtype=np.float64)
        return self.alpha + self.beta * t + self.delta * np.maximum(0.0, t - self.break_index)

    def fitted_values(self) -> np.ndarray:
        return self.trend_values() + self.seasonal.fitted

    def slopes_per_year(self, grid_step: float) -> dict[str, float]:
        return {
            "before": self.beta / grid_step,
            "change": self.delta / grid_step,
            "after": (self.beta + self.delta) / grid_step,
        }


@dataclass(frozen=True)
class BreakTestResult:
    """Break-test statistic with its bootstrap distribution."""

    statistic: float
    bootstrap_stats: np.ndarray
    critical_value: float
    p_value: float
    alpha: float
    break_index: int

    @property
    def reject(self) -> bool:
        return self.statistic > self.critical_value


@dataclass(frozen=True)
class BreakDateCi:
    """Confidence interval for the break position, in grid and calendar units."""

    break_index: int
    break_date: dt.date
    lower_index: int
    upper_index: int
    lower_date: dt.date
    upper_date: dt.date
    level: float
    bootstrap_indices: np.ndarray

    @property
    def length(self) -> int:
        return self.upper_index - self.lower_index


@dataclass(frozen=True)
class ParamCi:
    estimate: float
    lower: float
    upper: float


@dataclass(frozen=True)
class SlopeCis:
    """Bootstrap intervals for intercept, slopes, and slope change (per grid step)."""

    intercept: ParamCi
    slope_before: ParamCi
    slope_change: ParamCi
    slope_after: ParamCi
    level: float

    def per_year(self, grid_step: float) -> dict[str, ParamCi]:
        s = 1.0 / grid_step
        out = {}
        for name in ("slope_before", "slope_change", "slope_after"):
            ci: ParamCi = getattr(self, name)
            out[name] = ParamCi(ci.estimate * s, ci.lower * s, ci.upper * s)
        return out


class BreakScan:
    """Reusable scan state for one (mask, harmonics, candidates) design.

    Everything that does not depend on the response is precomputed here,
    so that bootstrap replicates pay only O(T * p) per scan. The fixed
    columns are the intercept, rescaled time t/T, and the Fourier
    harmonics; each candidate adds one hinge column handled by
    partitioned regression.
    """

    def __init__(
        self,
        mask: np.ndarray,
        calendar_years: np.ndarray,
        candidates: np.ndarray,
        n_harmonics: int,
    ):
        mask = np.asarray(mask)
        T = mask.shape[0]
        self.n_time = T
        self.candidates = np.asarray(candidates, dtype=np.int64)
        if self.candidates.size == 0:
            raise ValueError("no break candidates")
        if self.candidates.min() < 1 or self.candidates.max() > T - 1:
            raise ValueError("break candidates must lie in 1..T-1")

        m = mask.astype(np.float64)
        tau = np.arange(1, T + 1, dtype=np.float64) / T
        Z = np.hstack([np.ones((T, 1)), tau[:, None], fourier_design(calendar_years, n_harmonics)])
        self.n_harmonics = n_harmonics
        self.n_params = Z.shape[1] + 1  # fixed columns plus the hinge
        self._m = m
        self._tau = tau
        self._Z = Z
        self._Zm = Z * m[:, None]

        gram = Z.T @ self._Zm
        try:
            self._cho = cho_factor(gram)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError(f"fixed design is singular: {exc}") from exc

        def suffix(x: np.ndarray) -> np.ndarray:
            out = np.zeros((T + 1,) + x.shape[1:], dtype=np.float64)
            out[:T] = np.cumsum(x[::-1], axis=0)[::-1]
            return out

        c = self.candidates
        tau_c = c / T
        s_mz = suffix(self._Zm)
        s_mtz = suffix(self._Zm * tau[:, None])
        s_m = suffix(m)
        s_mt = suffix(m * tau)
        s_mtt = suffix(m * tau * tau)
        self._suffix_m = s_m

        # Hinge cross products for every candidate at once.
        self._Zd = s_mtz[c] - tau_c[:, None] * s_mz[c]          # (n_cand, p0)
        dd = s_mtt[c] - 2.0 * tau_c * s_mt[c] + tau_c**2 * s_m[c]
        self._dd = dd
        self._W = cho_solve(self._cho, self._Zd.T)              # (p0, n_cand)
        schur = dd - np.einsum("cp,pc->c", self._Zd, self._W)
        self._schur = schur
        self._valid = schur > np.maximum(dd, 1e-300) * _SCHUR_RTOL
        if not self._valid.any():
            raise SingularDesignError("every break candidate is unidentified on this mask")
        n_bad = int((~self._valid).sum())
        if n_bad:
            warnings.warn(
                f"{n_bad} break candidate(s) skipped: hinge not identified on the observed points",
                stacklevel=2,
            )
        # Observed-point support at the trimming edges; the hinge needs
        # identifying variation on both sides of every candidate.
        n_left = s_m[0] - s_m[self.candidates[0]]
        n_right = s_m[self.candidates[-1]]
        if min(n_left, n_right) < self.n_params + 1:
            raise ValueError(
                "trimming leaves fewer than n_params + 1 observed points on one side; "
                "increase the trimming fraction"
            )

    def scan(self, y: np.ndarray) -> dict:
        """Fit the no-break model and every candidate; return the best break.

        Returns a dict with keys ``ssr0`` (no-break SSR), ``f_stat``
        (largest SSR reduction over candidates), ``best`` (position of
        the winning candidate, ties to the smallest), ``beta0`` (no-break
        coefficients, internal scaling), and ``ym``/``yy`` intermediates.
        """
        m = self._m
        ym = y * m
        yy = float(ym @ y)
        zy = self._Zm.T @ y
        beta0 = cho_solve(self._cho, zy)
        ssr0 = max(yy - float(zy @ beta0), 0.0)

        T = self.n_time
        tau = self._tau
        sy = np.zeros(T + 1)
        sy[:T] = np.cumsum(ym[::-1])[::-1]
        sty = np.zeros(T + 1)
        sty[:T] = np.cumsum((ym * tau)[::-1])[::-1]
        c = self.candidates
        dy = sty[c] - (c / T) * sy[c]

        num = dy - self._Zd @ beta0
        with np.errstate(divide="ignore", invalid="ignore"):
            red = np.where(self._valid, num * num / self._schur, -np.inf)
        red[self._valid & (red < yy * _NOISE_FLOOR)] = 0.0

        best = int(np.argmax(red))
        return {
            "ssr0": ssr0,
            "f_stat": float(red[best]),
            "best": int(self.candidates[best]),
            "best_pos": best,
            "beta0": beta0,
            "num": num,
            "yy": yy,
        }

    def coefficients_at(self, y: np.ndarray, break_at: int, scan: dict | None = None) -> dict:
        """Full coefficient vector of the model with the break at ``break_at``."""
        if scan is None:
            scan = self.scan(y)
        pos = int(np.searchsorted(self.candidates, break_at))
        if pos >= self.candidates.size or self.candidates[pos] != break_at:
            raise ValueError(f"{break_at} is not among the scan candidates")
        if not self._valid[pos]:
            raise SingularDesignError(f"candidate {break_at} is not identified")
        delta_tau = float(scan["num"][pos] / self._schur[pos])
        bz = scan["beta0"] - self._W[:, pos] * delta_tau
        red = delta_tau * scan["num"][pos]
        T = self.n_time
        return {
            "alpha": float(bz[0]),
            "beta": float(bz[1]) / T,
            "delta": delta_tau / T,
            "harmonics": bz[2:].copy(),
            "ssr": max(scan["ssr0"] - red, 0.0),
        }

    def null_fitted(self, beta0: np.ndarray) -> np.ndarray:
        """Fitted values (trend plus seasonal) of the no-break model, full grid."""
        return self._Z @ beta0

    def seasonal_fit(self, harmonics: np.ndarray) -> SeasonalFit:
        S = self.n_harmonics
        fourier = self._Z[:, 2:]
        return SeasonalFit(
            a=harmonics[:S].copy(),
            b=harmonics[S:].copy(),
            n_harmonics=S,
            fitted=fourier @ harmonics if S else np.zeros(self.n_time),
        )


def _scan_for(
    series: ObservedSeries, candidates: np.ndarray, n_harmonics: int
) -> BreakScan:
    return BreakScan(series.mask, series.calendar_years(), candidates, n_harmonics)


def _fit_from_scan(
    series: ObservedSeries, scan: BreakScan, y: np.ndarray, break_at: int, state: dict | None = None
) -> BrokenTrendFit:
    coef = scan.coefficients_at(y, break_at, state)
    return BrokenTrendFit(
        alpha=coef["alpha"],
        beta=coef["beta"],
        delta=coef["delta"],
        break_index=break_at,
        seasonal=scan.seasonal_fit(coef["harmonics"]),
        ssr=coef["ssr"],
        n_time=len(series),
    )


def fit_given_break(
    series: ObservedSeries, break_at: int, n_harmonics: int = 3
) -> BrokenTrendFit:
    """Mask-weighted least squares with the break imposed at ``break_at``."""
    if not 1 <= break_at <= len(series) - 1:
        raise ValueError("break position must lie in 1..T-1")
    scan = _scan_for(series, np.array([break_at]), n_harmonics)
    return _fit_from_scan(series, scan, series.values, break_at)


def estimate_break(
    series: ObservedSeries,
    trim: TrimmingSet | None = None,
    n_harmonics: int = 3,
) -> BrokenTrendFit:
    """Exhaustive scan of the trimming set; smallest-SSR break wins.

    Ties are broken toward the smallest candidate position. The estimator
    always returns a break; whether it is significant is the test's job.
    """
    trim = trim or trimming_set(len(series))
    scan = _scan_for(series, trim.candidates, n_harmonics)
    state = scan.scan(series.values)
    return _fit_from_scan(series, scan, series.values, state["best"], state)


def break_test(
    series: ObservedSeries,
    trim: TrimmingSet | None = None,
    cfg: AwbConfig | None = None,
    n_harmonics: int = 3,
    alpha: float = 0.05,
    residuals_from: str = "break",
    threads: int = 1,
) -> BreakTestResult:
    """Bootstrap test of a single slope change against a straight trend.

    The statistic is the drop in the observed-point sum of squared
    residuals from the best one-break model relative to the no-break
    model. Bootstrap samples are regenerated under the no-break null;
    each replicate reruns the full candidate scan. Rejection: statistic
    above the (1 - alpha) bootstrap quantile.

    ``residuals_from`` selects the fit whose residuals drive the
    bootstrap errors. The default "break" takes them from the best
    one-break fit, which keeps break-like noise patterns out of the
    resampled errors: with "null" residuals, a draw whose noise happens
    to look break-like inflates its own critical value, and the test
    loses both size accuracy and power.
    """
    if residuals_from not in ("break", "null"):
        raise ValueError("residuals_from must be 'break' or 'null'")
    cfg = cfg or AwbConfig()
    trim = trim or trimming_set(len(series))
    scan = _scan_for(series, trim.candidates, n_harmonics)
    y = series.values
    state = scan.scan(y)
    f_stat = state["f_stat"]

    fitted0 = scan.null_fitted(state["beta0"])
    if residuals_from == "break":
        best_fit = _fit_from_scan(series, scan, y, state["best"], state)
        u_hat = series.mask * (y - best_fit.fitted_values())
    else:
        u_hat = series.mask * (y - fitted0)

    def kernel(_b: int, xi: np.ndarray) -> float:
        y_star = fitted0 + xi * u_hat
        return scan.scan(y_star)["f_stat"]

    stats = run_replicates(cfg, len(series), kernel, threads=threads)
    p_value = (1.0 + float((stats >= f_stat).sum())) / (cfg.n_boot + 1.0)
    critical = empirical_quantile(stats, 1.0 - alpha)
    return BreakTestResult(
        statistic=f_stat,
        bootstrap_stats=stats,
        critical_value=critical,
        p_value=p_value,
        alpha=alpha,
        break_index=state["best"],
    )


def _break_resample_parts(
    series: ObservedSeries, fit: BrokenTrendFit
) -> tuple[np.ndarray, np.ndarray]:
    fitted = fit.fitted_values()
    u_hat = series.mask * (series.values - fitted)
    return fitted, u_hat


def break_ci(
    series: ObservedSeries,
    fit: BrokenTrendFit,
    cfg: AwbConfig | None = None,
    level: float = 0.95,
    trim: TrimmingSet | None = None,
    threads: int = 1,
) -> BreakDateCi:
    """Bootstrap confidence interval for the break position.

    Samples are regenerated with the estimated break imposed; each
    replicate re-estimates the break over the full candidate scan. The
    interval comes from the quantiles of the centered replicate
    positions: [T1 - q(1-a/2), T1 - q(a/2)].
    """
    cfg = cfg or AwbConfig()
    trim = trim or trimming_set(len(series), DEFAULT_TRIM_FRACTION)
    scan = _scan_for(series, trim.candidates, fit.seasonal.n_harmonics)
    fitted, u_hat = _break_resample_parts(series, fit)

    def kernel(_b: int, xi: np.ndarray) -> float:
        return scan.scan(fitted + xi * u_hat)["best"]

    locs = run_replicates(cfg, len(series), kernel, threads=threads)
    a = 1.0 - level
    centered = locs - fit.break_index
    lower = fit.break_index - empirical_quantile(centered, 1.0 - a / 2.0)
    upper = fit.break_index - empirical_quantile(centered, a / 2.0)
    lower_i, upper_i = int(round(lower)), int(round(upper))
    return BreakDateCi(
        break_index=fit.break_index,
        break_date=series.date_at(fit.break_index),
        lower_index=lower_i,
        upper_index=upper_i,
        lower_date=series.date_at(lower_i),
        upper_date=series.date_at(upper_i),
        level=level,
        bootstrap_indices=locs.astype(np.int64),
    )


def slope_cis(
    series: ObservedSeries,
    fit: BrokenTrendFit,
    cfg: AwbConfig | None = None,
    level: float = 0.95,
    trim: TrimmingSet | None = None,
    refit_break: bool = True,
    threads: int = 1,
) -> SlopeCis:
    """Bootstrap intervals for the trend coefficients.

    Replicates regenerate the series with the break imposed. By default
    each replicate re-estimates its own break position before reading
    off the coefficients, so the uncertainty of the break location flows
    into the slope intervals; with ``refit_break=False`` the
    coefficients are re-fit at the original position, which conditions
    that uncertainty away and undercovers when the break is estimated.
    """
    cfg = cfg or AwbConfig()
    if refit_break:
        trim = trim or trimming_set(len(series), DEFAULT_TRIM_FRACTION)
        scan = _scan_for(series, trim.candidates, fit.seasonal.n_harmonics)
    else:
        scan = _scan_for(series, np.array([fit.break_index]), fit.seasonal.n_harmonics)
    fitted, u_hat = _break_resample_parts(series, fit)

    def kernel(_b: int, xi: np.ndarray) -> tuple[float, float, float]:
        y_star = fitted + xi * u_hat
        state = scan.scan(y_star)
        at = state["best"] if refit_break else fit.break_index
        coef = scan.coefficients_at(y_star, at, state)
        return coef["alpha"], coef["beta"], coef["delta"]

    draws = run_replicates(cfg, len(series), kernel, threads=threads)
    a = 1.0 - level

    def centered_ci(estimate: float, boot: np.ndarray) -> ParamCi:
        centered = boot - estimate
        return ParamCi(
            estimate=estimate,
            lower=estimate - empirical_quantile(centered, 1.0 - a / 2.0),
            upper=estimate - empirical_quantile(centered, a / 2.0),
        )

    return SlopeCis(
        intercept=centered_ci(fit.alpha, draws[:, 0]),
        slope_before=centered_ci(fit.beta, draws[:, 1]),
        slope_change=centered_ci(fit.delta, draws[:, 2]),
        slope_after=centered_ci(fit.beta + fit.delta, draws[:, 1] + draws[:, 2]),
        level=level,
    )
