from __future__ import annotations

import pytest

from bgsched.debt import DebtCosts, SnapPolicy
from bgsched.engine import (
    DebtConfig,
    PolicyConfig,
    PoolConfig,
    SimConfig,
    SimulationConfig,
)
from bgsched.scheduler import HardwareModel
from bgsched.series import IntensitySeries, synthesize_series
from bgsched.trace import SyntheticProfile

# Busy 08:00-18:00, quiet nights, in ops/s per hour of the day.
VDI_INTENSITY = [300.0] * 8 + [2600.0] * 10 + [300.0] * 6


def vdi_profile(days: float = 6.0, noise: float = 0.05) -> SyntheticProfile:
    return SyntheticProfile(
        days=days,
        interval=600.0,
        intensity=list(VDI_INTENSITY),
        read_ratio=[0.7],
        unique_fraction=[0.5],
        noise=noise,
    )


def vdi_config() -> SimConfig:
    """64 cores, 1-hour snapshots on 10 LUNs, pool sized to cross 40% tied."""
    return SimConfig(
        hardware=HardwareModel(
            n_cores=64, fg_core_iops=50.0, bg_core_rate=20.0, interval=600.0
        ),
        pool=PoolConfig(total_blocks=400_000_000, initial_used=0.3),
        debt=DebtConfig(
            dmd_ratio=0.03,
            costs=DebtCosts(snap_delete=0.1, overwrite_gc=1.0, unmap=1.0),
        ),
        snapshots=SnapPolicy(luns=10, schedule_interval=3600.0, retention=3600.0),
        policy=PolicyConfig(low=0.40, high=0.50),
        simulation=SimulationConfig(train_days=2.0),
    )


def small_profile(**kwargs: object) -> SyntheticProfile:
    """Three days of hourly bins with a day/night swing."""
    settings = dict(
        days=3.0,
        interval=3600.0,
        intensity=[0.5] * 8 + [3.0] * 10 + [0.5] * 6,
        read_ratio=[0.6],
        unique_fraction=[0.4],
        unmap_fraction=0.02,
        unmap_length=65536,
    )
    settings.update(kwargs)
    return SyntheticProfile(**settings)  # type: ignore[arg-type]


def small_config(**pool: object) -> SimConfig:
    return SimConfig(
        hardware=HardwareModel(
            n_cores=8, fg_core_iops=1.0, bg_core_rate=0.5, interval=3600.0
        ),
        pool=PoolConfig(**pool),  # type: ignore[arg-type]
        snapshots=SnapPolicy(luns=2, schedule_interval=3600.0, retention=3600.0),
        simulation=SimulationConfig(train_days=2.0),
    )


@pytest.fixture
def small_series() -> IntensitySeries:
    return synthesize_series(small_profile(), seed=1)


@pytest.fixture
def hw() -> HardwareModel:
    return HardwareModel(n_cores=4, fg_core_iops=1.0, bg_core_rate=1.0, interval=10.0)
