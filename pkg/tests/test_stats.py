from __future__ import annotations

import numpy as np
import pytest

from bgsched.errors import ParameterError
from bgsched.series import synthesize_series
from bgsched.stats import (
    acf_peak_lag,
    autocorrelation,
    lag_spread,
    partial_autocorrelation,
)

from .conftest import vdi_profile


def test_acf_finds_daily_period():
    series = synthesize_series(vdi_profile(noise=0.0), seed=0)
    total = series.channel("total_iops")
    assert len(total) == 864

    acf = autocorrelation(total, 200)
    assert len(acf) == 201
    assert acf.values[0] == pytest.approx(1.0)
    assert not acf.degenerate
    assert acf_peak_lag(acf.values) == 144


def test_acf_of_sine():
    t = np.arange(240)
    acf = autocorrelation(np.sin(2 * np.pi * t / 24), 40)
    assert acf_peak_lag(acf.values) == 24
    assert acf.values[24] == pytest.approx(216 / 240, abs=0.02)


def test_constant_series_is_degenerate():
    acf = autocorrelation([5.0] * 50, 10)
    assert acf.degenerate
    assert acf.values[0] == 1.0
    assert not acf.values[1:].any()

    pacf = partial_autocorrelation([5.0] * 50, 10)
    assert pacf.degenerate
    assert len(pacf) == 10


def test_pacf_of_ar1_cuts_off():
    rng = np.random.default_rng(0)
    x = np.zeros(4000)
    for t in range(1, len(x)):
        x[t] = 0.6 * x[t - 1] + rng.standard_normal()

    pacf = partial_autocorrelation(x, 5)
    assert len(pacf) == 5
    assert pacf.values[0] == pytest.approx(0.6, abs=0.05)
    assert np.all(np.abs(pacf.values[1:]) < 0.1)


def test_white_noise_correlograms_stay_small():
    x = np.random.default_rng(42).standard_normal(10_000)
    acf = autocorrelation(x, 50)
    assert acf.values[0] == pytest.approx(1.0)
    assert np.all(np.abs(acf.values[1:]) < 0.05)

    pacf = partial_autocorrelation(x, 50)
    assert len(pacf) == 50
    assert np.all(np.abs(pacf.values) < 0.05)


@pytest.mark.parametrize("max_lag", [0, 10, 11])
def test_lag_bounds(max_lag):
    with pytest.raises(ParameterError):
        autocorrelation(np.arange(10.0), max_lag)


def test_peak_without_zero_crossing_skips_first_trough():
    assert acf_peak_lag([1.0, 0.9, 0.8, 0.85, 0.7]) == 3
    assert acf_peak_lag([1.0]) == 0


def test_lag_spread():
    x = np.tile([1.0, 5.0, 3.0, 2.0], 10)
    spread = lag_spread(x, 4)
    assert len(spread.current) == len(spread.lagged) == 36
    assert spread.correlation == pytest.approx(1.0)
    assert lag_spread(np.ones(10), 2).correlation == 0.0
