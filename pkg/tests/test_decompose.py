from __future__ import annotations

import numpy as np
import pytest

from bgsched.decompose import decompose_additive
from bgsched.errors import ParameterError, SeriesLengthError

PERIOD = 12


@pytest.fixture
def trended():
    t = np.arange(5 * PERIOD)
    season = 10.0 * np.sin(2 * np.pi * t / PERIOD)
    return 0.5 * t + season, season


def test_recovers_linear_trend_and_season(trended):
    y, season = trended
    d = decompose_additive(y, PERIOD)

    assert d.season == pytest.approx(season[:PERIOD], abs=1e-9)
    valid = d.trend_valid
    assert d.trend[valid] == pytest.approx(0.5 * np.arange(len(y))[valid])
    assert np.abs(d.residual[valid]).max() < 1e-9


def test_edges_are_masked_and_padded(trended):
    y, _ = trended
    d = decompose_additive(y, PERIOD)
    half = PERIOD // 2
    assert not d.trend_valid[:half].any()
    assert not d.trend_valid[-half:].any()
    assert d.trend_valid[half:-half].all()
    assert np.isfinite(d.trend).all()
    assert d.trend[0] == d.trend[half]


def test_components_sum_to_series(trended):
    y, _ = trended
    rng = np.random.default_rng(1)
    noisy = y + rng.normal(0.0, 2.0, len(y))
    d = decompose_additive(noisy, PERIOD)
    assert d.reconstruct() == pytest.approx(noisy)
    assert len(d.seasonal()) == len(noisy)


def test_short_series():
    with pytest.raises(SeriesLengthError):
        decompose_additive(np.arange(2 * PERIOD - 1.0), PERIOD)


def test_period_too_small():
    with pytest.raises(ParameterError):
        decompose_additive(np.arange(10.0), 1)
