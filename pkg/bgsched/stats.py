from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from statsmodels.tsa.stattools import acf, levinson_durbin

from bgsched.errors import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Correlogram:
    """Correlation values by lag; ``degenerate`` marks a constant input."""

    values: np.ndarray
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class LagSpread:
    lag: int
    current: np.ndarray
    lagged: np.ndarray
    correlation: float


def _check(series: Sequence[float], max_lag: int) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if max_lag < 1 or len(x) <= max_lag:
        raise ParameterError(
            f"need series length > max_lag >= 1, got {len(x)} and {max_lag}"
        )
    return x


def _is_constant(x: np.ndarray) -> bool:
    return bool(np.ptp(x) == 0.0)


def autocorrelation(series: Sequence[float], max_lag: int) -> Correlogram:
    """Sample autocorrelation r_0..r_max_lag (mean-centered, biased estimator)."""
    x = _check(series, max_lag)
    if _is_constant(x):
        logger.warning("Autocorrelation of a constant series is degenerate")
        values = np.zeros(max_lag + 1)
        values[0] = 1.0
        return Correlogram(values, degenerate=True)
    return Correlogram(np.asarray(acf(x, nlags=max_lag, fft=True), dtype=float))


def partial_autocorrelation(series: Sequence[float], max_lag: int) -> Correlogram:
    """PACF phi_11..phi_kk via the Durbin-Levinson recursion on the ACF."""
    x = _check(series, max_lag)
    if _is_constant(x):
        logger.warning("Partial autocorrelation of a constant series is degenerate")
        return Correlogram(np.zeros(max_lag), degenerate=True)

    r = autocorrelation(x, max_lag).values
    with np.errstate(divide="ignore", invalid="ignore"):
        _, _, pacf, _, _ = levinson_durbin(r, nlags=max_lag, isacov=True)
    values = np.asarray(pacf[1:], dtype=float)

    bad = ~np.isfinite(values)
    if bad.any():
        first = int(np.argmax(bad))
        logger.warning("Durbin-Levinson recursion became singular at lag %d", first + 1)
        values[first:] = 0.0
        return Correlogram(values, degenerate=True)
    return Correlogram(values)


def acf_peak_lag(values: Sequence[float]) -> int:
    """Lag of the dominant correlation peak past the initial decay lobe.

    The search starts at the first lag where the ACF drops to zero or below;
    without such a crossing it starts after the first local minimum.
    """
    r = np.asarray(values, dtype=float)
    if len(r) < 2:
        return 0
    crossing = np.nonzero(r[1:] <= 0.0)[0]
    if len(crossing):
        start = int(crossing[0]) + 1
    else:
        start = 1
        while start + 1 < len(r) and r[start + 1] < r[start]:
            start += 1
    return start + int(np.argmax(r[start:]))


def lag_spread(series: Sequence[float], lag: int) -> LagSpread:
    """Pairs (Y_t, Y_{t+lag}) and their Pearson correlation."""
    x = _check(series, lag)
    current, lagged = x[:-lag], x[lag:]
    if _is_constant(current) or _is_constant(lagged):
        correlation = 0.0
    else:
        correlation = float(np.corrcoef(current, lagged)[0, 1])
    return LagSpread(lag=lag, current=current, lagged=lagged, correlation=correlation)
