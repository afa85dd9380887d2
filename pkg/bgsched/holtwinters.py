from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from bgsched.errors import ParameterError, SeriesLengthError

logger = logging.getLogger(__name__)

SMOOTHING_GRID = (0.01, 0.05) + tuple(round(0.1 * i, 1) for i in range(1, 10))
DAMPING_GRID = (0.8, 0.9, 0.98)


@dataclass(frozen=True)
class HoltWintersParams:
    alpha: float
    beta: float
    gamma: float
    phi: float = 1.0

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1]")
        if not 0.0 < self.phi <= 1.0:
            raise ParameterError("phi must be in (0, 1]")


@dataclass(frozen=True)
class HoltWintersFit:
    """Final additive Holt-Winters state after smoothing a series."""

    params: HoltWintersParams
    period: int
    n: int
    level: float
    trend: float
    season: np.ndarray
    sse: float

    def forecast(self, horizon: int) -> np.ndarray:
        if horizon <= 0:
            raise ParameterError("horizon must be positive")
        steps = np.arange(1, horizon + 1)
        phi = self.params.phi
        if phi == 1.0:
            damped = steps.astype(float)
        else:
            damped = np.cumsum(phi**steps)
        phase = (self.n + steps - 1) % self.period
        return self.level + damped * self.trend + self.season[phase]


def _smooth(
    y: np.ndarray,
    period: int,
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    phi: np.ndarray,
):
    """Run the recursions for every parameter row at once."""
    rows = len(alpha)
    level = np.full(rows, y[:period].mean())
    trend = np.full(rows, (y[period : 2 * period].mean() - y[:period].mean()) / period)
    season = np.tile(y[:period] - y[:period].mean(), (rows, 1))
    sse = np.zeros(rows)

    for t in range(period, len(y)):
        p = t % period
        s = season[:, p]
        err = y[t] - (level + phi * trend + s)
        sse += err * err
        new_level = alpha * (y[t] - s) + (1.0 - alpha) * (level + phi * trend)
        trend = beta * (new_level - level) + (1.0 - beta) * phi * trend
        season[:, p] = gamma * (y[t] - new_level) + (1.0 - gamma) * s
        level = new_level
    return level, trend, season, sse


def holt_winters(
    series: Sequence[float],
    period: int,
    damped: bool = False,
    params: Optional[HoltWintersParams] = None,
) -> HoltWintersFit:
    """Fit additive Holt-Winters, grid-searching parameters unless given.

    The grid is evaluated in one vectorised pass; the combination with the
    lowest in-sample one-step SSE wins, first in grid order on ties.
    """
    y = np.asarray(series, dtype=float)
    if period < 2:
        raise ParameterError("period must be at least 2")
    if len(y) < 2 * period:
        raise SeriesLengthError(
            f"Holt-Winters needs at least {2 * period} values, got {len(y)}"
        )

    if params is not None:
        params.validate()
        grid = [(params.alpha, params.beta, params.gamma, params.phi)]
    else:
        phis = DAMPING_GRID if damped else (1.0,)
        grid = list(
            itertools.product(SMOOTHING_GRID, SMOOTHING_GRID, SMOOTHING_GRID, phis)
        )

    alpha, beta, gamma, phi = (np.array(col) for col in zip(*grid))
    level, trend, season, sse = _smooth(y, period, alpha, beta, gamma, phi)
    best = int(np.argmin(sse))
    chosen = HoltWintersParams(*grid[best])
    logger.debug("Holt-Winters chose %s (sse=%g)", chosen, sse[best])
    return HoltWintersFit(
        params=chosen,
        period=period,
        n=len(y),
        level=float(level[best]),
        trend=float(trend[best]),
        season=season[best].copy(),
        sse=float(sse[best]),
    )
