from __future__ import annotations

import datetime
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    AbstractSet,
    Any,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    TypeVar,
    Union,
)

import numpy as np

from bgsched.clustering import (
    DayCluster,
    HOLIDAY_LABEL,
    WEEKDAY_LABELS,
    cluster_days,
    hourly_profile,
    label_index,
    nearest_cluster,
)
from bgsched.errors import (
    ConfigError,
    DataError,
    InsufficientHistoryError,
    ParameterError,
)
from bgsched.series import CHANNELS, RATIO_CHANNELS, BinStats, IntensitySeries
from bgsched.util import atomic_open

logger = logging.getLogger(__name__)

T = TypeVar("T", float, np.ndarray)

REQUIRED_CHANNELS = ("total_iops", "write_blocks", "read_ratio", "unique_fraction")


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"smoothing factor must be in (0, 1], got {alpha}")


def ewma_update(prev: Optional[T], y: T, alpha: float) -> T:
    """One step of S_t = alpha * Y_t + (1 - alpha) * S_{t-1}; S_1 = Y_1."""
    _check_alpha(alpha)
    if prev is None:
        return y
    return alpha * y + (1.0 - alpha) * prev


def ewma_fold(values: Iterable[T], alpha: float) -> Optional[T]:
    state: Optional[T] = None
    for y in values:
        state = ewma_update(state, y, alpha)
    return state


@dataclass
class ForecastConfig:
    alpha_trend: float = 0.3
    alpha_season: float = 0.3
    # 0 keeps the whole history.
    history_weeks: int = 0
    period: Optional[int] = None
    holidays: List[datetime.date] = field(default_factory=list)
    start_date: Optional[datetime.date] = None
    seed: int = 0
    elbow: float = 0.1

    def validate(self) -> None:
        _check_alpha(self.alpha_trend)
        _check_alpha(self.alpha_season)
        if self.history_weeks < 0:
            raise ParameterError("history_weeks must not be negative")
        if self.period is not None and self.period < 1:
            raise ParameterError("period must be positive")


def epoch_date(epoch: float) -> datetime.date:
    return datetime.datetime.fromtimestamp(epoch, tz=datetime.timezone.utc).date()


def _label(day: datetime.date, holidays: AbstractSet[datetime.date]) -> str:
    return HOLIDAY_LABEL if day in holidays else WEEKDAY_LABELS[day.weekday()]


@dataclass(frozen=True)
class ForecastModel:
    channel: str
    period: int
    bins_per_day: int
    alpha_trend: float
    alpha_season: float
    history_weeks: int
    start_date: datetime.date
    days: int
    holidays: FrozenSet[datetime.date]
    clusters: Tuple[DayCluster, ...]
    trend: np.ndarray
    season: np.ndarray
    fallback_cluster: int

    def cluster_for(self, label: str) -> Tuple[int, bool]:
        """Index of the cluster forecasting ``label`` and whether it was known."""
        for i, c in enumerate(self.clusters):
            if label in c:
                return i, True
        return self.fallback_cluster, False

    def calendar(self, start_bin: int, horizon: int) -> Tuple[List[str], int]:
        """Day labels covering ``horizon`` bins from ``start_bin``.

        Bins count from the start of the training history. Returns the labels
        and the phase of ``start_bin`` within its first chunk.
        """
        first_chunk = start_bin // self.period
        last_chunk = (start_bin + horizon - 1) // self.period
        labels = []
        for chunk in range(first_chunk, last_chunk + 1):
            offset = chunk * self.period // self.bins_per_day
            day = self.start_date + datetime.timedelta(days=offset)
            labels.append(_label(day, self.holidays))
        return labels, start_bin % self.period

    def to_dict(self) -> Dict[str, Any]:
        return {
            "channel": self.channel,
            "period": self.period,
            "bins_per_day": self.bins_per_day,
            "alpha_trend": self.alpha_trend,
            "alpha_season": self.alpha_season,
            "history_weeks": self.history_weeks,
            "start_date": self.start_date.isoformat(),
            "days": self.days,
            "holidays": sorted(d.isoformat() for d in self.holidays),
            "clusters": [
                {"members": sorted(c.members), "centroid": c.centroid.tolist()}
                for c in self.clusters
            ],
            "trend": self.trend.tolist(),
            "season": self.season.tolist(),
            "fallback_cluster": self.fallback_cluster,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ForecastModel:
        try:
            return cls(
                channel=data["channel"],
                period=int(data["period"]),
                bins_per_day=int(data["bins_per_day"]),
                alpha_trend=float(data["alpha_trend"]),
                alpha_season=float(data["alpha_season"]),
                history_weeks=int(data["history_weeks"]),
                start_date=datetime.date.fromisoformat(data["start_date"]),
                days=int(data["days"]),
                holidays=frozenset(
                    datetime.date.fromisoformat(d) for d in data["holidays"]
                ),
                clusters=tuple(
                    DayCluster(frozenset(c["members"]), np.asarray(c["centroid"]))
                    for c in data["clusters"]
                ),
                trend=np.asarray(data["trend"], dtype=float),
                season=np.asarray(data["season"], dtype=float),
                fallback_cluster=int(data["fallback_cluster"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"invalid forecast model: {e}") from e


def fit(
    history: IntensitySeries,
    holidays: AbstractSet[datetime.date] = frozenset(),
    config: Optional[ForecastConfig] = None,
    *,
    channel: str = "total_iops",
    clusters: Optional[Sequence[DayCluster]] = None,
    fallback_cluster: Optional[int] = None,
) -> ForecastModel:
    """Fit per-cluster EWMA trend and season states on ``history``.

    Each day contributes its mean to its cluster's trend state and its
    mean-removed profile to the cluster's season state, oldest day first.
    """
    config = config or ForecastConfig()
    config.validate()
    bins_per_day = history.bins_per_day
    period = config.period or bins_per_day
    if bins_per_day % period:
        raise ParameterError(f"period {period} does not divide {bins_per_day} bins/day")

    values = history.channel(channel)
    n_days = len(values) // period
    if n_days < 2:
        raise InsufficientHistoryError(
            f"need at least 2 full days of history, got {len(values) / period:.2f}"
        )

    holidays = frozenset(holidays) | frozenset(config.holidays)
    start_date = config.start_date or epoch_date(history.start_epoch)
    first = 0
    if config.history_weeks:
        first = max(0, n_days - 7 * config.history_weeks)
    daily = values[: n_days * period].reshape(n_days, period)[first:]
    labels = [
        _label(
            start_date + datetime.timedelta(days=d * period // bins_per_day), holidays
        )
        for d in range(first, n_days)
    ]

    if clusters is None:
        profiles: Dict[str, List[np.ndarray]] = {}
        for label, day in zip(labels, daily):
            profiles.setdefault(label, []).append(hourly_profile(day))
        clusters = cluster_days(
            {lb: np.mean(p, axis=0) for lb, p in profiles.items()},
            len(profiles),
            seed=config.seed,
            elbow=config.elbow,
        )
        mean_profile = np.mean([hourly_profile(day) for day in daily], axis=0)
        fallback_cluster = nearest_cluster(clusters, mean_profile)

    index = label_index(clusters)
    unknown = set(labels) - set(index)
    if unknown:
        raise ParameterError(f"day labels {sorted(unknown)} belong to no cluster")

    trend = np.zeros(len(clusters))
    season = np.zeros((len(clusters), period))
    for c in range(len(clusters)):
        rows = np.array([day for lb, day in zip(labels, daily) if index[lb] == c])
        if not len(rows):
            continue
        means = rows.mean(axis=1)
        trend[c] = ewma_fold(means, config.alpha_trend)
        season[c] = ewma_fold(rows - means[:, None], config.alpha_season)

    return ForecastModel(
        channel=channel,
        period=period,
        bins_per_day=bins_per_day,
        alpha_trend=config.alpha_trend,
        alpha_season=config.alpha_season,
        history_weeks=config.history_weeks,
        start_date=start_date,
        days=n_days,
        holidays=holidays,
        clusters=tuple(clusters),
        trend=trend,
        season=season,
        fallback_cluster=fallback_cluster or 0,
    )


def fit_channels(
    history: IntensitySeries,
    holidays: AbstractSet[datetime.date] = frozenset(),
    config: Optional[ForecastConfig] = None,
    channels: Sequence[str] = tuple(CHANNELS),
) -> Dict[str, ForecastModel]:
    """Fit one model per channel, sharing the day clusters of total_iops."""
    base = fit(history, holidays, config, channel="total_iops")
    models = {"total_iops": base}
    for name in channels:
        if name not in models:
            models[name] = fit(
                history,
                holidays,
                config,
                channel=name,
                clusters=base.clusters,
                fallback_cluster=base.fallback_cluster,
            )
    return models


def forecast(
    model: ForecastModel,
    horizon: int,
    calendar: Sequence[str],
    start_phase: int = 0,
) -> np.ndarray:
    """Forecast ``horizon`` bins as cluster trend plus cluster season.

    ``calendar`` labels consecutive chunks of ``model.period`` bins; the
    first bin sits at ``start_phase`` within the first chunk.
    """
    if horizon <= 0:
        raise ParameterError("horizon must be positive")
    if not 0 <= start_phase < model.period:
        raise ParameterError("start_phase must lie within one period")
    chunks = (start_phase + horizon - 1) // model.period + 1
    if len(calendar) < chunks:
        raise ParameterError(f"calendar covers {len(calendar)} of {chunks} days")

    steps = start_phase + np.arange(horizon)
    chunk, phase = steps // model.period, steps % model.period
    cluster = np.empty(chunks, dtype=int)
    for i, label in enumerate(calendar[:chunks]):
        cluster[i], known = model.cluster_for(label)
        if not known:
            logger.warning(
                "Unknown day label %r; forecasting with cluster %d",
                label,
                cluster[i],
            )
    c = cluster[chunk]
    return model.trend[c] + model.season[c, phase]


def forecast_range(model: ForecastModel, start_bin: int, horizon: int) -> np.ndarray:
    """Forecast bins counted from the start of the training history."""
    calendar, phase = model.calendar(start_bin, horizon)
    return forecast(model, horizon, calendar, phase)


@dataclass(frozen=True)
class ChannelForecast:
    values: Dict[str, np.ndarray]
    clamped: FrozenSet[str] = frozenset()

    def __len__(self) -> int:
        return len(next(iter(self.values.values())))

    def bins(self) -> List[BinStats]:
        total = self.values["total_iops"]
        ratio = self.values["read_ratio"]
        unmap_len = self.values.get("unmap_len", np.zeros(len(total)))
        return [
            BinStats(
                total_iops=float(t),
                read_iops=float(t * r),
                write_iops=float(t * (1.0 - r)),
                unmap_len=float(m),
                write_blocks=float(w),
                unique_write_fraction=float(u),
                read_ratio=float(r),
            )
            for t, r, m, w, u in zip(
                total,
                ratio,
                unmap_len,
                self.values["write_blocks"],
                self.values["unique_fraction"],
            )
        ]


def forecast_channels(
    models: Mapping[str, ForecastModel],
    horizon: int,
    calendar: Optional[Sequence[str]] = None,
    start_phase: int = 0,
    *,
    start_bin: Optional[int] = None,
) -> ChannelForecast:
    """Forecast every channel; ratios are clamped to [0, 1] and counts to >= 0.

    Pass either an explicit ``calendar`` or ``start_bin`` relative to the
    training history.
    """
    missing = [name for name in REQUIRED_CHANNELS if name not in models]
    if missing:
        raise ConfigError(f"missing forecast models for channels: {missing}")

    values: Dict[str, np.ndarray] = {}
    clamped: Set[str] = set()
    for name, model in models.items():
        if calendar is None:
            y = forecast_range(model, start_bin or 0, horizon)
        else:
            y = forecast(model, horizon, calendar, start_phase)
        upper = 1.0 if name in RATIO_CHANNELS else np.inf
        bounded = np.clip(y, 0.0, upper)
        if np.any(bounded != y):
            clamped.add(name)
        values[name] = bounded
    if clamped & RATIO_CHANNELS:
        logger.warning("Clamped ratio forecasts: %s", sorted(clamped & RATIO_CHANNELS))
    return ChannelForecast(values, frozenset(clamped))


def save_models(path: Union[str, Path], models: Mapping[str, ForecastModel]) -> None:
    with atomic_open(path) as f:
        json.dump({name: m.to_dict() for name, m in models.items()}, f, indent=2)


def load_models(path: Union[str, Path]) -> Dict[str, ForecastModel]:
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot load forecast models from {path}: {e}") from e
    return {name: ForecastModel.from_dict(d) for name, d in data.items()}
