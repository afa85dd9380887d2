from __future__ import annotations

import abc
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from bgsched.debt import DebtLedger, PoolState
from bgsched.errors import InsufficientHistoryError, ParameterError
from bgsched.forecast import (
    ChannelForecast,
    ForecastConfig,
    ForecastModel,
    fit_channels,
    forecast_channels,
)
from bgsched.holtwinters import holt_winters
from bgsched.metrics import ForecastErrors, evaluate
from bgsched.series import CHANNELS, RATIO_CHANNELS, BinStats, IntensitySeries
from bgsched.scheduler import (
    BgDirective,
    DebtContext,
    HardwareModel,
    IdleDef,
    Projection,
    SchedulePlan,
    compute_cff,
    dynamic_bucket_planner,
    fixed_bucket_policy,
)
from bgsched.util import assert_never

logger = logging.getLogger(__name__)


class PolicyKind(Enum):
    FIXED = "fixed"
    DYNAMIC = "dynamic"


class ForecastMethod(Enum):
    EWMA = "ewma"
    HOLT_WINTERS = "holt_winters"
    ORACLE = "oracle"


class ForecastSource(abc.ABC):
    """Forecast bins for the whole simulated series, indexed like it."""

    _bins: List[BinStats]

    @abc.abstractmethod
    def prepare(self, series: IntensitySeries) -> None:
        ...

    def window(self, start: int, horizon: int) -> List[BinStats]:
        return self._bins[start : start + horizon]


def _train_bins(series: IntensitySeries, train_days: float) -> int:
    bins = int(round(train_days * series.bins_per_day))
    if len(series) < bins:
        raise InsufficientHistoryError(
            f"series has {len(series)} bins, training needs {bins}"
        )
    return bins


class EwmaForecastSource(ForecastSource):
    def __init__(
        self, config: Optional[ForecastConfig] = None, train_days: float = 2.0
    ) -> None:
        self.config = config or ForecastConfig()
        self.train_days = train_days

    def prepare(self, series: IntensitySeries) -> None:
        train = series.slice(0, _train_bins(series, self.train_days))
        models = fit_channels(train, config=self.config)
        self._bins = forecast_channels(models, len(series), start_bin=0).bins()


def holt_winters_channels(
    train: IntensitySeries, ahead: int, damped: bool = False
) -> Dict[str, np.ndarray]:
    """Holt-Winters forecasts ``ahead`` bins past ``train`` for every channel."""
    values: Dict[str, np.ndarray] = {}
    for name in CHANNELS:
        if ahead:
            fitted = holt_winters(train.channel(name), train.bins_per_day, damped)
            predicted = fitted.forecast(ahead)
        else:
            predicted = np.zeros(0)
        upper = 1.0 if name in RATIO_CHANNELS else math.inf
        values[name] = np.clip(predicted, 0.0, upper)
    return values


class HoltWintersForecastSource(ForecastSource):
    """Actual bins over the training span, Holt-Winters per channel after it."""

    def __init__(self, damped: bool = False, train_days: float = 2.0) -> None:
        self.damped = damped
        self.train_days = train_days

    def prepare(self, series: IntensitySeries) -> None:
        n_train = _train_bins(series, self.train_days)
        train = series.slice(0, n_train)
        predicted = holt_winters_channels(train, len(series) - n_train, self.damped)
        self._bins = list(train.bins) + ChannelForecast(predicted).bins()


class OracleForecastSource(ForecastSource):
    """Perfect foresight: the forecast is the series itself."""

    def prepare(self, series: IntensitySeries) -> None:
        self._bins = list(series.bins)


def make_forecast_source(
    method: ForecastMethod,
    config: Optional[ForecastConfig] = None,
    train_days: float = 2.0,
    damped: bool = False,
) -> ForecastSource:
    if method is ForecastMethod.EWMA:
        return EwmaForecastSource(config, train_days)
    elif method is ForecastMethod.HOLT_WINTERS:
        return HoltWintersForecastSource(damped, train_days)
    elif method is ForecastMethod.ORACLE:
        return OracleForecastSource()
    else:
        assert_never(method)


@dataclass(frozen=True)
class PolicyState:
    pool: PoolState
    ledger: DebtLedger
    write_history: Sequence[float]
    demand_ops: float


class SchedulerPolicy(abc.ABC):
    kind: PolicyKind

    def __init__(self) -> None:
        self.events: List[str] = []

    def reset(self, series: IntensitySeries) -> None:
        self.events = []

    @abc.abstractmethod
    def directive(self, bin_index: int, state: PolicyState) -> BgDirective:
        ...

    def plan_rows(self) -> List[Dict[str, Any]]:
        return []


class FixedPolicy(SchedulerPolicy):
    kind = PolicyKind.FIXED

    def __init__(
        self,
        hw: HardwareModel,
        low: float = 0.40,
        high: float = 0.50,
        hysteresis: float = 0.02,
    ) -> None:
        super().__init__()
        self.hw = hw
        self.low = low
        self.high = high
        self.hysteresis = hysteresis
        self._aggressive = False

    def reset(self, series: IntensitySeries) -> None:
        super().reset(series)
        self._aggressive = False

    def directive(self, bin_index: int, state: PolicyState) -> BgDirective:
        directive = fixed_bucket_policy(
            state.pool,
            self.hw,
            self.low,
            self.high,
            aggressive=self._aggressive,
            hysteresis=self.hysteresis,
        )
        if directive.aggressive and not self._aggressive:
            logger.info("Bin %d: debt over high watermark, BG takes over", bin_index)
        self._aggressive = directive.aggressive
        return directive


class DynamicPolicy(SchedulerPolicy):
    """Forecast-driven debt bucket, replanned every ``replan_every`` bins."""

    kind = PolicyKind.DYNAMIC

    def __init__(
        self,
        hw: HardwareModel,
        context: DebtContext,
        source: ForecastSource,
        *,
        replan_every: int = 6,
        horizon: int = 1008,
        idle_def: Optional[IdleDef] = None,
    ) -> None:
        super().__init__()
        self.hw = hw
        self.context = context
        self.source = source
        self.replan_every = replan_every
        self.horizon = horizon
        self.idle_def = idle_def or IdleDef()
        self.plan: Optional[SchedulePlan] = None
        self._rows: List[Dict[str, Any]] = []
        self._n_bins = 0

    def reset(self, series: IntensitySeries) -> None:
        super().reset(series)
        self.source.prepare(series)
        self.plan = None
        self._rows = []
        self._n_bins = len(series)

    def _replan(self, bin_index: int, state: PolicyState) -> SchedulePlan:
        horizon = min(self._n_bins - bin_index, self.horizon)
        projection = Projection(
            self.source.window(bin_index, horizon),
            state.pool,
            state.ledger,
            self.hw,
            self.context,
            state.write_history,
        )
        plan = dynamic_bucket_planner(
            projection, idle_def=self.idle_def, start_bin=bin_index
        )
        if plan.depleted:
            guard = compute_cff(projection, self.idle_def)
            plan = replace(plan, guard=guard)
            self.events.append(
                f"bin {bin_index}: projected pool depletion in "
                f"{int(plan.depletion.sum())} bins, guard cff {guard.cff}"
                + (" (unavoidable)" if guard.depleted else "")
            )
        rows = plan.rows()[: self.replan_every]
        self._rows.extend(rows)
        return plan

    def directive(self, bin_index: int, state: PolicyState) -> BgDirective:
        plan = self.plan
        if (
            plan is None
            or not plan.covers(bin_index)
            or bin_index - plan.start_bin >= self.replan_every
        ):
            plan = self.plan = self._replan(bin_index, state)
        allocation = plan.allocation(bin_index)
        cff = allocation.cff
        if plan.guard is not None:
            cff = max(cff, plan.guard.cff)
        limit = max(0, state.pool.hard_limit_blocks - state.pool.used_blocks)
        return BgDirective(
            cff=cff,
            bucket_limit=limit,
            global_limit=limit,
            flags=plan.flags(bin_index - plan.start_bin),
        )

    def plan_rows(self) -> List[Dict[str, Any]]:
        return list(self._rows)


@dataclass(frozen=True)
class ForecastWindow:
    """Forecast of a held-out span next to what actually happened."""

    start_bin: int
    actual: Dict[str, np.ndarray]
    predicted: Dict[str, np.ndarray]
    errors: Dict[str, ForecastErrors]
    models: Dict[str, ForecastModel] = field(default_factory=dict)


def forecast_window(
    series: IntensitySeries,
    method: ForecastMethod,
    *,
    train_bins: int,
    test_start: int,
    horizon: int,
    config: Optional[ForecastConfig] = None,
    damped: bool = False,
) -> ForecastWindow:
    """Fit on the first ``train_bins`` bins and score the forecast of
    ``[test_start, test_start + horizon)`` channel by channel.
    """
    if test_start < train_bins:
        raise ParameterError(
            f"test span starting at bin {test_start} overlaps the "
            f"{train_bins}-bin training span"
        )
    if horizon <= 0 or test_start + horizon > len(series):
        raise ParameterError(
            f"test span [{test_start}, {test_start + horizon}) is outside "
            f"the {len(series)}-bin series"
        )
    train = series.slice(0, train_bins)
    models: Dict[str, ForecastModel] = {}
    if method is ForecastMethod.EWMA:
        models = fit_channels(train, config=config)
        predicted = forecast_channels(models, horizon, start_bin=test_start).values
    elif method is ForecastMethod.HOLT_WINTERS:
        skip = test_start - train_bins
        ahead = holt_winters_channels(train, skip + horizon, damped)
        predicted = {name: values[skip:] for name, values in ahead.items()}
    elif method is ForecastMethod.ORACLE:
        raise ParameterError("the oracle forecast only applies to simulations")
    else:
        assert_never(method)

    test = series.slice(test_start, test_start + horizon)
    actual = {name: test.channel(name) for name in predicted}
    errors = {name: evaluate(actual[name], predicted[name]) for name in predicted}
    return ForecastWindow(test_start, actual, predicted, errors, models)
