"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from gaptrend import ObservedSeries

T0 = dt.date(2000, 1, 1)


def make_series(values, mask=None, t0=T0) -> ObservedSeries:
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        mask = np.ones(values.shape[0], dtype=np.uint8)
    mask = np.asarray(mask, dtype=np.uint8)
    return ObservedSeries(np.where(mask == 1, values, 0.0), mask, t0)


def random_masked_series(rng, n_time, observed_fraction=0.6, scale=1.0):
    mask = (rng.random(n_time) < observed_fraction).astype(np.uint8)
    # Keep the container invariant satisfied on sparse draws.
    mask[0] = mask[-1] = 1
    values = rng.normal(0.0, scale, n_time)
    return make_series(values, mask)


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)
