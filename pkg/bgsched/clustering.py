from __future__ import annotations

import datetime
import logging
import math
from dataclasses import dataclass
from typing import AbstractSet, Dict, FrozenSet, List, Mapping, Sequence

import numpy as np
from sklearn.cluster import KMeans

from bgsched.errors import ParameterError

logger = logging.getLogger(__name__)

WEEKDAY_LABELS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
HOLIDAY_LABEL = "holiday"
LABEL_ORDER = WEEKDAY_LABELS + (HOLIDAY_LABEL,)

HOURS = 24
ELBOW_THRESHOLD = 0.1


@dataclass(frozen=True)
class DayCluster:
    members: FrozenSet[str]
    centroid: np.ndarray

    def __contains__(self, label: object) -> bool:
        return label in self.members


def day_labels(
    start: datetime.date,
    n_days: int,
    holidays: AbstractSet[datetime.date] = frozenset(),
) -> List[str]:
    labels = []
    for i in range(n_days):
        day = start + datetime.timedelta(days=i)
        label = HOLIDAY_LABEL if day in holidays else WEEKDAY_LABELS[day.weekday()]
        labels.append(label)
    return labels


def hourly_profile(day: Sequence[float]) -> np.ndarray:
    """Average a day's bins into 24 hourly values."""
    values = np.asarray(day, dtype=float)
    if not len(values):
        raise ParameterError("cannot profile an empty day")
    return np.repeat(values, HOURS).reshape(HOURS, len(values)).mean(axis=1)


def max_clusters(n_labels: int) -> int:
    return max(1, math.ceil(math.sqrt(n_labels / 2)))


def _label_key(label: str) -> tuple:
    if label in LABEL_ORDER:
        return (0, LABEL_ORDER.index(label), label)
    return (1, 0, label)


def cluster_days(
    daily_profiles: Mapping[str, Sequence[float]],
    n_labels: int = 0,
    *,
    seed: int = 0,
    elbow: float = ELBOW_THRESHOLD,
) -> List[DayCluster]:
    """Group day labels by the shape of their daily profile.

    k-means runs for k = 1 up to ceil(sqrt(n / 2)); k grows only while each
    extra cluster cuts the within-cluster SSE by at least ``elbow``.
    """
    if not daily_profiles:
        raise ParameterError("need at least one day label to cluster")
    labels = sorted(daily_profiles, key=_label_key)
    points = np.array([np.asarray(daily_profiles[lb], dtype=float) for lb in labels])
    if points.ndim != 2:
        raise ParameterError("daily profiles must share one dimension")

    bound = max_clusters(n_labels or len(labels))
    bound = min(bound, len(np.unique(points, axis=0)))

    best = np.zeros(len(labels), dtype=int)
    best_sse = float(((points - points.mean(axis=0)) ** 2).sum())
    for k in range(2, bound + 1):
        if best_sse == 0.0:
            break
        km = KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed)
        assignment = km.fit_predict(points)
        sse = float(km.inertia_)
        if (best_sse - sse) / best_sse < elbow:
            break
        best, best_sse = assignment, sse

    clusters = []
    for c in np.unique(best):
        mask = best == c
        members = frozenset(lb for lb, m in zip(labels, mask) if m)
        clusters.append(DayCluster(members, points[mask].mean(axis=0)))
    clusters.sort(key=lambda c: min(_label_key(lb) for lb in c.members))
    logger.debug(
        "Clustered %d day labels into %d clusters", len(labels), len(clusters)
    )
    return clusters


def label_index(clusters: Sequence[DayCluster]) -> Dict[str, int]:
    return {lb: i for i, c in enumerate(clusters) for lb in c.members}


def nearest_cluster(clusters: Sequence[DayCluster], profile: np.ndarray) -> int:
    distances = [float(((c.centroid - profile) ** 2).sum()) for c in clusters]
    return int(np.argmin(distances))
