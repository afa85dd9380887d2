from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from statsmodels.tsa.seasonal import seasonal_decompose

from bgsched.errors import ParameterError, SeriesLengthError


@dataclass(frozen=True)
class Decomposition:
    """Additive split of a series into trend, one period of season and residual.

    The centered moving average leaves the first and last ``period // 2``
    trend values undefined; they are padded with the nearest defined value
    and masked out by ``trend_valid``.
    """

    period: int
    trend: np.ndarray
    season: np.ndarray
    residual: np.ndarray
    trend_valid: np.ndarray

    def seasonal(self) -> np.ndarray:
        """Season expanded to the length of the series."""
        phase = np.arange(len(self.trend)) % self.period
        return self.season[phase]

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal() + self.residual


def decompose_additive(series: Sequence[float], period: int) -> Decomposition:
    y = np.asarray(series, dtype=float)
    if period < 2:
        raise ParameterError("period must be at least 2")
    if len(y) < 2 * period:
        raise SeriesLengthError(
            f"decomposition needs at least {2 * period} values, got {len(y)}"
        )

    result = seasonal_decompose(
        y, model="additive", period=period, two_sided=True, extrapolate_trend=0
    )
    trend = np.asarray(result.trend, dtype=float)
    valid = np.isfinite(trend)
    first, last = np.argmax(valid), len(valid) - 1 - np.argmax(valid[::-1])
    trend[:first] = trend[first]
    trend[last + 1 :] = trend[last]

    season = np.asarray(result.seasonal, dtype=float)[:period].copy()
    residual = y - trend - season[np.arange(len(y)) % period]
    return Decomposition(
        period=period,
        trend=trend,
        season=season,
        residual=residual,
        trend_valid=valid,
    )
