"""Autoregressive wild bootstrap engine.

Every inference procedure in the package shares this machinery: an AR(1)
multiplier process with unit marginal variance, masked bootstrap errors,
and a replicate runner whose output is deterministic for a given seed no
matter how the replicates are scheduled. Multipliers come from a
counter-based generator keyed by (seed, replicate id), so replicate b is
the same whether it runs first, last, serially, or on a worker thread.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .exceptions import ReplicateError

DEFAULT_THETA = 0.1
DEFAULT_N_BOOT = 999

_UINT64 = np.uint64
_KEY_MOD = 2**64


def dependence_length(n_time: int) -> float:
    """Tuning length l = 1.75 * T^(1/3) shared by the multiplier decay default."""
    if n_time < 2:
        raise ValueError("need at least 2 time points")
    return 1.75 * float(n_time) ** (1.0 / 3.0)


def default_gamma(n_time: int, theta: float = DEFAULT_THETA) -> float:
    """Default AR(1) multiplier coefficient theta^(1 / (1.75 T^(1/3)))."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    return theta ** (1.0 / dependence_length(n_time))


@dataclass(frozen=True)
class AwbConfig:
    """Bootstrap tuning: multiplier decay, replicate count, and seed.

    ``gamma`` may be left unset, in which case it is resolved per series
    as ``theta ** (1 / (1.75 T^(1/3)))``.
    """

    seed: int = 0
    gamma: float | None = None
    theta: float = DEFAULT_THETA
    n_boot: int = DEFAULT_N_BOOT

    def __post_init__(self) -> None:
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.n_boot < 1:
            raise ValueError("n_boot must be at least 1")

    def resolve_gamma(self, n_time: int) -> float:
        return self.gamma if self.gamma is not None else default_gamma(n_time, self.theta)


@dataclass(frozen=True)
class MultiplierPath:
    """One AR(1) multiplier path with N(0,1) marginals at every position."""

    xi: np.ndarray


def _stream(seed: int, replicate_id: int) -> np.random.Generator:
    key = np.array([seed % _KEY_MOD, replicate_id % _KEY_MOD], dtype=_UINT64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_multipliers(cfg: AwbConfig, n_time: int, replicate_id: int) -> MultiplierPath:
    """Generate the multiplier path for one replicate.

    The path starts from a standard normal draw and evolves as an AR(1)
    recursion with innovation variance 1 - gamma^2, so the marginal
    variance is exactly 1 at every position. Identical (seed,
    replicate_id) keys give identical paths regardless of execution
    order or worker count.
    """
    gamma = cfg.resolve_gamma(n_time)
    z = _stream(cfg.seed, replicate_id).standard_normal(n_time)
    scale = np.sqrt(1.0 - gamma * gamma)
    driving = np.concatenate([z[:1], scale * z[1:]])
    xi = lfilter([1.0], [1.0, -gamma], driving)
    return MultiplierPath(xi=xi)


def bootstrap_errors(
    residuals: np.ndarray, mask: np.ndarray, path: MultiplierPath
) -> np.ndarray:
    """Masked wild-bootstrap errors: mask * multiplier * residual."""
    residuals = np.asarray(residuals, dtype=np.float64)
    mask = np.asarray(mask)
    if residuals.shape != mask.shape or residuals.shape != path.xi.shape:
        raise ValueError("residuals, mask, and multipliers must share one length")
    return mask * path.xi * residuals


def run_replicates(
    cfg: AwbConfig,
    n_time: int,
    kernel: Callable[[int, np.ndarray], object],
    n_boot: int | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Evaluate ``kernel(replicate_id, multipliers)`` for ids 0..B-1.

    Results are collected in replicate-id order; the output is identical
    for any thread count because each replicate depends only on its own
    counter-based stream. A kernel failure is re-raised as
    ``ReplicateError`` carrying the replicate id.
    """
    B = cfg.n_boot if n_boot is None else int(n_boot)
    if B < 1:
        raise ValueError("need at least 1 replicate")

    def one(b: int) -> object:
        path = draw_multipliers(cfg, n_time, b)
        try:
            return kernel(b, path.xi)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise ReplicateError(b, str(exc)) from exc

    if threads <= 1:
        results = [one(b) for b in range(B)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(B)))
    return np.asarray(results, dtype=np.float64)


def empirical_quantile(values: np.ndarray, alpha: float) -> float:
    """Left-continuous empirical quantile inf{u : P[X <= u] >= alpha}.

    This is the type-1 (no interpolation) inverse of the empirical
    distribution function, which makes quantiles exactly reproducible
    from the sorted bootstrap draws.
    """
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = values.shape[0]
    if n == 0:
        raise ValueError("empty sample")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    idx = int(np.ceil(alpha * n)) - 1
    return float(values[min(max(idx, 0), n - 1)])
