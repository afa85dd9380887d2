from __future__ import annotations

import datetime
import logging
import math

import numpy as np
import pytest

from bgsched.errors import (
    ConfigError,
    DataError,
    InsufficientHistoryError,
    ParameterError,
)
from bgsched.forecast import (
    ForecastConfig,
    ForecastModel,
    ewma_fold,
    ewma_update,
    fit,
    fit_channels,
    forecast_channels,
    forecast_range,
    load_models,
    save_models,
)
from bgsched.policy import ForecastMethod, forecast_window
from bgsched.series import synthesize_series
from bgsched.trace import SyntheticProfile

from .conftest import vdi_profile

TRAIN = 5 * 144
TEST = 144


def closed_form(values, alpha):
    n = len(values)
    total = (1 - alpha) ** (n - 1) * values[0]
    for i in range(1, n):
        total += alpha * (1 - alpha) ** (n - 1 - i) * values[i]
    return total


def test_ewma_matches_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        values = rng.uniform(-100, 100, rng.integers(1, 30))
        alpha = rng.uniform(0.01, 1.0)
        assert ewma_fold(values, alpha) == pytest.approx(closed_form(values, alpha))


def test_ewma_first_value_and_bounds():
    assert ewma_update(None, 7.0, 0.3) == 7.0
    assert ewma_fold([], 0.3) is None
    for alpha in (0.0, 1.5):
        with pytest.raises(ParameterError):
            ewma_update(1.0, 2.0, alpha)


def test_repeating_profile_is_a_fixed_point():
    series = synthesize_series(vdi_profile(noise=0.0), seed=0)
    window = forecast_window(
        series, ForecastMethod.EWMA, train_bins=TRAIN, test_start=TRAIN, horizon=TEST
    )
    for name, errors in window.errors.items():
        assert errors.smape < 1e-4, name


def test_noisy_forecast_errors():
    series = synthesize_series(vdi_profile(noise=0.10), seed=42)
    window = forecast_window(
        series, ForecastMethod.EWMA, train_bins=TRAIN, test_start=TRAIN, horizon=TEST
    )
    errors = window.errors["total_iops"]

    assert 0 < errors.smape <= 20.0
    assert errors.mpe is not None
    assert abs(errors.mpe) <= errors.smape / 2
    bound = np.abs(errors.per_bin_error).max() * math.sqrt(TEST) * 3
    assert abs(errors.cumulative_error) <= bound


def test_weekend_gets_its_own_cluster():
    profile = SyntheticProfile(
        days=21.0,
        interval=3600.0,
        intensity=[10.0] * 8 + [100.0] * 10 + [10.0] * 6,
        day_scales=[1.0] * 5 + [0.3] * 2,
    )
    series = synthesize_series(profile, seed=0)
    model = fit(series.slice(0, 14 * 24))

    assert [sorted(c.members) for c in model.clusters] == [
        ["fri", "mon", "thu", "tue", "wed"],
        ["sat", "sun"],
    ]
    saturday = 19 * 24
    predicted = forecast_range(model, saturday, 24)
    actual = series.channel("total_iops")[saturday : saturday + 24]
    assert predicted == pytest.approx(actual)


def test_unknown_label_falls_back(caplog):
    series = synthesize_series(vdi_profile(noise=0.0), seed=0)
    model = fit(series.slice(0, TRAIN))
    assert model.cluster_for("sat") == (model.fallback_cluster, False)
    with caplog.at_level(logging.WARNING, logger="bgsched.forecast"):
        predicted = forecast_range(model, TRAIN, TEST)
    assert "Unknown day label 'sat'" in caplog.text
    assert predicted == pytest.approx(series.channel("total_iops")[TRAIN:])


def test_holidays_get_their_own_label():
    series = synthesize_series(vdi_profile(days=7.0, noise=0.0), seed=0)
    config = ForecastConfig(holidays=[datetime.date(2024, 1, 3)])
    model = fit(series, config=config)
    members = set().union(*(c.members for c in model.clusters))
    assert "holiday" in members
    assert "wed" not in members


def test_needs_two_days():
    series = synthesize_series(vdi_profile(days=1.5), seed=0)
    with pytest.raises(InsufficientHistoryError):
        fit(series)


def test_models_round_trip(tmp_path):
    series = synthesize_series(vdi_profile(days=3.0), seed=1)
    models = fit_channels(series)
    path = tmp_path / "models.json"
    save_models(path, models)
    loaded = load_models(path)

    assert set(loaded) == set(models)
    before = forecast_channels(models, 200, start_bin=432).values
    after = forecast_channels(loaded, 200, start_bin=432).values
    for name in models:
        assert after[name] == pytest.approx(before[name])


def test_invalid_model_data():
    with pytest.raises(DataError):
        ForecastModel.from_dict({"channel": "total_iops"})


def test_forecast_channels_needs_every_channel():
    series = synthesize_series(vdi_profile(days=3.0), seed=1)
    models = fit_channels(series, channels=["total_iops", "write_blocks"])
    with pytest.raises(ConfigError, match="read_ratio"):
        forecast_channels(models, 10, start_bin=0)


def test_ratio_forecasts_stay_in_range():
    series = synthesize_series(vdi_profile(days=3.0, noise=0.3), seed=5)
    predicted = forecast_channels(fit_channels(series), 144, start_bin=432)
    for name in ("read_ratio", "unique_fraction"):
        assert np.all((predicted.values[name] >= 0) & (predicted.values[name] <= 1))
    assert np.all(predicted.values["total_iops"] >= 0)
    assert len(predicted.bins()) == 144


def test_forecast_window_rejects_overlap():
    series = synthesize_series(vdi_profile(days=3.0), seed=1)
    with pytest.raises(ParameterError, match="overlaps"):
        forecast_window(
            series, ForecastMethod.EWMA, train_bins=288, test_start=200, horizon=100
        )
    with pytest.raises(ParameterError):
        forecast_window(
            series, ForecastMethod.EWMA, train_bins=288, test_start=288, horizon=200
        )
    with pytest.raises(ParameterError):
        forecast_window(
            series, ForecastMethod.ORACLE, train_bins=288, test_start=288, horizon=10
        )


def test_holt_winters_window():
    series = synthesize_series(vdi_profile(days=4.0, noise=0.0), seed=0)
    window = forecast_window(
        series,
        ForecastMethod.HOLT_WINTERS,
        train_bins=288,
        test_start=432,
        horizon=144,
    )
    assert window.start_bin == 432
    assert not window.models
    assert len(window.predicted["total_iops"]) == 144
    assert window.errors["total_iops"].smape < 1e-6
