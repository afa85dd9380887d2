from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from bgsched.debt import PoolState
from bgsched.engine import (
    Comparison,
    SimConfig,
    SimMetrics,
    compare_policies,
    reduction_ratio,
    run,
)
from bgsched.errors import ConfigError, DataError, ParameterError
from bgsched.policy import ForecastMethod, PolicyKind
from bgsched.scheduler import HardwareModel
from bgsched.series import IntensitySeries, synthesize_series

from .conftest import small_config, small_profile, vdi_config, vdi_profile


def check_invariants(metrics: SimMetrics, total_blocks: int) -> None:
    for r in metrics.records:
        assert r.pool_used + r.debt_tied <= total_blocks, r.bin
        assert r.pool_free >= 0
        assert r.c_fg + r.c_bg >= 0
    assert metrics.debt_conserved
    for kind, created in metrics.debt_created.items():
        outstanding = metrics.debt_outstanding[kind]
        assert created == metrics.debt_processed[kind] + outstanding


@pytest.fixture(scope="module")
def vdi_comparison() -> Comparison:
    series = synthesize_series(vdi_profile(), seed=0)
    return compare_policies(series, vdi_config())


def test_dynamic_policy_cuts_violations(vdi_comparison):
    fixed, dynamic = vdi_comparison.fixed, vdi_comparison.dynamic
    assert fixed.slo_violation_fraction > 0
    assert dynamic.slo_violation_fraction <= fixed.slo_violation_fraction / 3
    assert vdi_comparison.ratio >= 3.0
    assert not vdi_comparison.degenerate


def test_dynamic_policy_queues_no_more_for_space(vdi_comparison):
    fixed, dynamic = vdi_comparison.fixed, vdi_comparison.dynamic
    assert dynamic.queued_oor_fraction <= fixed.queued_oor_fraction


def test_fixed_policy_steals_during_bursts(vdi_comparison):
    fixed = vdi_comparison.fixed
    assert any(r.cff > 0 for r in fixed.records)
    assert any(r.queued_latency > 0 for r in fixed.records if r.cff > 0)


def test_acceptance_runs_hold_invariants(vdi_comparison):
    total = vdi_config().pool.total_blocks
    for metrics in (vdi_comparison.fixed, vdi_comparison.dynamic):
        check_invariants(metrics, total)
        assert len(metrics.records) == 864
        assert len(metrics.ledger_rows) == 864 * 3
    assert vdi_comparison.dynamic.plan_rows
    assert not vdi_comparison.fixed.plan_rows


@pytest.mark.parametrize("seed", range(100))
def test_random_runs_hold_invariants(seed):
    rng = np.random.default_rng(seed)
    # About 30% of the hours are idle.
    intensity = rng.uniform(0.2, 3.0, 24) * (rng.random(24) < 0.7)
    profile = small_profile(
        days=2.0,
        intensity=intensity.tolist(),
        read_ratio=[float(rng.uniform(0.3, 1.0))],
        unique_fraction=[float(rng.uniform(0.0, 1.0))],
        noise=0.1,
    )
    series = synthesize_series(profile, seed)
    total = int(rng.integers(100_000, 1_000_000))
    cfg = small_config(total_blocks=total, initial_used=float(rng.uniform(0.3, 1.0)))
    cfg.policy.forecast_method = ForecastMethod.ORACLE

    comparison = compare_policies(series, cfg)
    check_invariants(comparison.fixed, total)
    check_invariants(comparison.dynamic, total)


def oracle_comparison(series: IntensitySeries, cfg: SimConfig) -> Comparison:
    cfg.policy.forecast_method = ForecastMethod.ORACLE
    return compare_policies(series, cfg)


def test_idle_night_then_burst():
    profile = small_profile(intensity=[0.0] * 8 + [3.0] * 10 + [0.0] * 6)
    comparison = oracle_comparison(synthesize_series(profile, 0), small_config())
    for metrics in (comparison.fixed, comparison.dynamic):
        check_invariants(metrics, 400_000_000)
        assert sum(metrics.debt_processed.values()) > 0


@pytest.mark.parametrize("initial_used", [0.95, 0.97, 0.99, 0.995])
def test_nearly_full_pool(initial_used):
    cfg = small_config(total_blocks=10_000, initial_used=initial_used)
    comparison = oracle_comparison(synthesize_series(small_profile(), 0), cfg)
    check_invariants(comparison.fixed, 10_000)
    check_invariants(comparison.dynamic, 10_000)


@pytest.mark.parametrize("intensity", [0.0, 3.0])
@pytest.mark.parametrize("kind", list(PolicyKind))
def test_full_pool_without_writes(kind, intensity):
    profile = small_profile(intensity=[intensity], read_ratio=[1.0], unmap_fraction=0.0)
    cfg = small_config(total_blocks=10_000, initial_used=1.0).with_policy(kind)
    cfg.policy.forecast_method = ForecastMethod.ORACLE
    metrics = run(synthesize_series(profile, 0), cfg)

    check_invariants(metrics, 10_000)
    assert metrics.queued_oor == 0
    assert all(r.pool_used == 10_000 for r in metrics.records)


@pytest.mark.parametrize("kind", list(PolicyKind))
def test_load_at_foreground_capacity(kind):
    profile = small_profile(intensity=[8.0], read_ratio=[1.0], unmap_fraction=0.0)
    cfg = small_config().with_policy(kind)
    cfg.policy.forecast_method = ForecastMethod.ORACLE
    metrics = run(synthesize_series(profile, 0), cfg)

    assert metrics.slo_violation_fraction == 0.0
    for r in metrics.records:
        assert r.offered == 8 * 3600
        assert r.c_fg == 8 and r.cff == 0
        assert r.served == r.offered
        assert r.backlog == 0


@pytest.mark.parametrize("kind", list(PolicyKind))
def test_zero_load_leaves_the_pool_alone(kind):
    cfg = small_config().with_policy(kind)
    cfg.policy.forecast_method = ForecastMethod.ORACLE
    metrics = run(synthesize_series(small_profile(intensity=[0.0]), 0), cfg)

    used = PoolState.with_utilization(cfg.pool.total_blocks, cfg.pool.initial_used)
    for r in metrics.records:
        assert r.pool_used == used.used_blocks
        assert r.debt_tied == 0
        assert (r.c_fg, r.c_bg, r.bg_ops) == (0, 8, 0)
    assert not any(metrics.debt_created.values())


def test_backlogged_bins_serve_at_capacity():
    profile = small_profile(intensity=[0.5] * 8 + [12.0] * 10 + [0.5] * 6)
    comparison = oracle_comparison(synthesize_series(profile, 0), small_config())
    ops_per_core = small_config().hardware.fg_ops_per_core
    for metrics in (comparison.fixed, comparison.dynamic):
        backlogged = [r for r in metrics.records if r.backlog > 0]
        assert backlogged
        for r in backlogged:
            assert r.queued_oor == 0
            assert r.served == pytest.approx(r.c_fg * ops_per_core)


def test_writes_held_for_space_are_not_served():
    cfg = small_config(total_blocks=10_000, initial_used=0.99)
    cfg.policy.kind = PolicyKind.FIXED
    metrics = run(synthesize_series(small_profile(), seed=0), cfg)

    assert metrics.queued_oor > 0
    backlog = 0.0
    for r in metrics.records:
        assert r.served + r.backlog == pytest.approx(backlog + r.offered)
        backlog = r.backlog


def test_reclaim_beyond_live_data_is_reported():
    profile = small_profile(unique_fraction=[0.0])
    metrics = run(synthesize_series(profile, 0), small_config(initial_used=0.0))

    assert metrics.unreclaimed_blocks > 0
    assert metrics.summary()["debt"]["unreclaimed_blocks"] == metrics.unreclaimed_blocks
    assert all(r.pool_used == 0 for r in metrics.records)


def test_full_pool_queues_writes():
    cfg = small_config(total_blocks=10_000, initial_used=0.99)
    cfg.policy.kind = PolicyKind.FIXED
    metrics = run(synthesize_series(small_profile(), seed=0), cfg)

    assert metrics.queued_oor > 0
    assert 0 < metrics.queued_oor_fraction <= metrics.slo_violation_fraction
    check_invariants(metrics, 10_000)


def test_offered_load_is_accounted(small_series):
    metrics = run(small_series, small_config())
    assert metrics.offered == pytest.approx(small_series.channel("total_iops").sum())
    summary = metrics.summary()
    assert summary["bins"] == len(small_series)
    assert summary["debt"]["conserved"]
    assert [d["day"] for d in summary["daily_balance"]] == [0, 1, 2]


def test_warmup_is_excluded(small_series):
    cfg = small_config()
    cfg.simulation.warmup_days = 1.0
    metrics = run(small_series, cfg)
    assert metrics.warmup_bins == 24
    assert len(metrics.counted) == len(small_series) - 24


def test_runs_are_deterministic(small_series):
    first = run(small_series, small_config()).summary()
    second = run(small_series, small_config()).summary()
    assert first == second


def test_parallel_compare_matches_serial(small_series):
    serial = compare_policies(small_series, small_config())
    parallel = compare_policies(small_series, small_config(), workers=2)
    assert parallel.to_dict() == serial.to_dict()


def test_zero_load_is_degenerate():
    series = synthesize_series(small_profile(intensity=[0.0]), seed=0)
    comparison = compare_policies(series, small_config())
    assert comparison.degenerate
    assert comparison.ratio == 1.0
    assert comparison.fixed.slo_violation_fraction == 0.0
    assert comparison.dynamic.slo_violation_fraction == 0.0
    assert comparison.to_dict()["degenerate"]


def test_reduction_ratio():
    assert reduction_ratio(10.0, 2.0) == (5.0, False)
    assert reduction_ratio(0.0, 0.0) == (1.0, True)
    ratio, degenerate = reduction_ratio(3.0, 0.0)
    assert math.isinf(ratio) and not degenerate


def test_infinite_ratio_serializes(vdi_comparison):
    data = replace(vdi_comparison, ratio=math.inf).to_dict()
    assert data["violation_reduction_ratio"] == "inf"


def test_interval_must_match_hardware(small_series):
    with pytest.raises(ConfigError, match="interval"):
        run(small_series, vdi_config())


def test_empty_series():
    with pytest.raises(DataError):
        run(IntensitySeries(interval=3600.0), small_config())


def test_invalid_config(small_series):
    cfg = small_config()
    cfg.pool.initial_used = 1.5
    with pytest.raises(ConfigError):
        run(small_series, cfg)


def test_compared_policies_share_hardware(small_series):
    cfg = small_config()
    other = replace(cfg, hardware=HardwareModel(n_cores=4, interval=3600.0))
    with pytest.raises(ParameterError):
        compare_policies(small_series, cfg, other)
