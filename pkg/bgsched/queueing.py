"""Stationary M/M/c view of background debt service.

The simulator decides core counts by dry-running forecasts; this module
gives the closed-form Erlang C numbers for the run's mean debt arrival rate
as a cross-check.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

from bgsched.errors import ParameterError


def erlang_b(servers: int, offered_load: float) -> float:
    blocking = 1.0
    for k in range(1, servers + 1):
        blocking = offered_load * blocking / (k + offered_load * blocking)
    return blocking


def erlang_c(servers: int, offered_load: float) -> float:
    """Probability that an arriving job waits, for ``servers`` and load ``a``."""
    if servers <= 0:
        raise ParameterError("servers must be positive")
    if offered_load >= servers:
        return 1.0
    if offered_load <= 0:
        return 0.0
    b = erlang_b(servers, offered_load)
    return servers * b / (servers - offered_load * (1.0 - b))


def mean_wait(arrival_rate: float, service_rate: float, servers: int) -> float:
    if arrival_rate >= servers * service_rate:
        return math.inf
    c = erlang_c(servers, arrival_rate / service_rate)
    return c / (servers * service_rate - arrival_rate)


@dataclass(frozen=True)
class MmcAdvisory:
    arrival_rate: float
    service_rate: float
    offered_load: float
    min_stable_cores: int
    cores: int
    wait_probability: float
    mean_wait_seconds: float

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if math.isinf(self.mean_wait_seconds):
            data["mean_wait_seconds"] = "inf"
        return data


def mmc_advisory(
    arrival_rate: float,
    service_rate: float,
    cores: int,
    max_cores: Optional[int] = None,
) -> MmcAdvisory:
    """Erlang C figures for debt ops arriving at ``arrival_rate`` ops/s.

    ``service_rate`` is one BG core's ops/s; ``cores`` is the average BG
    core count the run had.
    """
    if service_rate <= 0 or arrival_rate < 0:
        raise ParameterError("need a positive service rate and non-negative arrivals")
    load = arrival_rate / service_rate
    stable = math.floor(load) + 1
    if max_cores is not None:
        stable = min(stable, max_cores + 1)
    servers = max(1, cores)
    return MmcAdvisory(
        arrival_rate=arrival_rate,
        service_rate=service_rate,
        offered_load=load,
        min_stable_cores=stable,
        cores=cores,
        wait_probability=erlang_c(servers, load),
        mean_wait_seconds=mean_wait(arrival_rate, service_rate, servers),
    )
