from __future__ import annotations

import concurrent.futures
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from bgsched.debt import (
    DebtCosts,
    DebtKind,
    DebtLedger,
    LedgerRow,
    PoolState,
    SnapPolicy,
    apply_interval,
    gen_overwrite_debt,
    gen_snap_delete_debt,
    gen_unmap_debt,
)
from bgsched.errors import ConfigError, DataError, InvariantError, ParameterError
from bgsched.forecast import ForecastConfig
from bgsched.policy import (
    DynamicPolicy,
    FixedPolicy,
    ForecastMethod,
    ForecastSource,
    PolicyKind,
    PolicyState,
    SchedulerPolicy,
    make_forecast_source,
)
from bgsched.queueing import MmcAdvisory, mmc_advisory
from bgsched.scheduler import (
    DebtContext,
    HardwareModel,
    IdleDef,
    allocate_cores,
    dispatch,
    prioritize,
)
from bgsched.series import BinStats, IntensitySeries
from bgsched.util import assert_never

logger = logging.getLogger(__name__)

# Blocks of rounding slack kept free when admitting writes.
SPACE_SLACK = 2


@dataclass
class PoolConfig:
    total_blocks: int = 400_000_000
    initial_used: float = 0.5
    hard_limit_fraction: float = 0.95
    block_size: int = 4096


@dataclass
class DebtConfig:
    dmd_ratio: float = 0.03
    costs: DebtCosts = field(default_factory=DebtCosts)


@dataclass
class PolicyConfig:
    kind: PolicyKind = PolicyKind.DYNAMIC
    low: float = 0.40
    high: float = 0.50
    hysteresis: float = 0.02
    replan_every: int = 6
    horizon_bins: int = 1008
    idle: IdleDef = field(default_factory=IdleDef)
    forecast_method: ForecastMethod = ForecastMethod.EWMA
    damped: bool = False


@dataclass
class SimulationConfig:
    train_days: float = 2.0
    warmup_days: float = 0.0
    seed: int = 0
    workers: int = 1


@dataclass
class SimConfig:
    hardware: HardwareModel = field(default_factory=HardwareModel)
    pool: PoolConfig = field(default_factory=PoolConfig)
    debt: DebtConfig = field(default_factory=DebtConfig)
    snapshots: SnapPolicy = field(default_factory=SnapPolicy)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def validate(self) -> None:
        self.hardware.validate()
        self.snapshots.validate()
        self.debt.costs.validate()
        self.policy.idle.validate()
        self.forecast.validate()
        pool = self.pool
        if pool.total_blocks <= 0 or pool.block_size <= 0:
            raise ConfigError("pool.total_blocks and pool.block_size must be positive")
        if not 0.0 <= pool.initial_used <= 1.0:
            raise ConfigError("pool.initial_used must be in [0, 1]")
        if not 0.0 < pool.hard_limit_fraction <= 1.0:
            raise ConfigError("pool.hard_limit_fraction must be in (0, 1]")
        if not 0.02 <= self.debt.dmd_ratio <= 0.05:
            raise ConfigError("debt.dmd_ratio must be in [0.02, 0.05]")
        policy = self.policy
        if not 0.0 < policy.low < policy.high < 1.0:
            raise ConfigError("policy needs 0 < low < high < 1")
        if policy.replan_every < 1 or policy.horizon_bins < 1:
            raise ConfigError(
                "policy.replan_every and policy.horizon_bins must be positive"
            )
        sim = self.simulation
        if sim.train_days < 0 or sim.warmup_days < 0 or sim.workers < 1:
            raise ConfigError("simulation days must not be negative, workers >= 1")

    def with_policy(self, kind: PolicyKind) -> SimConfig:
        return replace(self, policy=replace(self.policy, kind=kind))

    @property
    def context(self) -> DebtContext:
        return DebtContext(
            snap_policy=self.snapshots,
            costs=self.debt.costs,
            dmd_ratio=self.debt.dmd_ratio,
            block_size=self.pool.block_size,
        )


@dataclass(frozen=True)
class BinRecord:
    bin: int
    offered: float
    served: float
    queued_latency: float
    queued_oor: float
    backlog: float
    pool_used: int
    debt_tied: int
    pool_free: int
    c_fg: int
    c_bg: int
    cff: int
    bg_budget: int
    bg_ops: int
    flags: str = ""

    @property
    def violations(self) -> float:
        return self.queued_latency + self.queued_oor


def _percent(part: float, whole: float) -> float:
    return 100.0 * part / whole if whole > 0 else 0.0


@dataclass
class SimMetrics:
    policy: str
    records: List[BinRecord] = field(default_factory=list)
    ledger_rows: List[LedgerRow] = field(default_factory=list)
    plan_rows: List[Dict[str, Any]] = field(default_factory=list)
    events: List[str] = field(default_factory=list)
    warmup_bins: int = 0
    bins_per_day: int = 144
    debt_created: Dict[str, int] = field(default_factory=dict)
    debt_processed: Dict[str, int] = field(default_factory=dict)
    debt_outstanding: Dict[str, int] = field(default_factory=dict)
    rejections: Dict[str, int] = field(default_factory=dict)
    unreclaimed_blocks: int = 0
    advisory: Optional[MmcAdvisory] = None

    @property
    def counted(self) -> List[BinRecord]:
        return self.records[self.warmup_bins :]

    @property
    def offered(self) -> float:
        return sum(r.offered for r in self.counted)

    @property
    def violated(self) -> float:
        return sum(r.violations for r in self.counted)

    @property
    def queued_oor(self) -> float:
        return sum(r.queued_oor for r in self.counted)

    @property
    def slo_violation_fraction(self) -> float:
        return _percent(self.violated, self.offered)

    @property
    def queued_oor_fraction(self) -> float:
        return _percent(self.queued_oor, self.offered)

    @property
    def violation_interval_fraction(self) -> float:
        bins = self.counted
        return _percent(sum(1 for r in bins if r.violations > 0), len(bins))

    @property
    def oor_interval_fraction(self) -> float:
        bins = self.counted
        return _percent(sum(1 for r in bins if r.queued_oor > 0), len(bins))

    @property
    def debt_conserved(self) -> bool:
        return all(
            self.debt_created[k]
            == self.debt_processed[k] + self.debt_outstanding[k]
            for k in self.debt_created
        )

    def daily_balance(self) -> List[Dict[str, Any]]:
        days: Dict[int, Dict[str, Any]] = {}
        for row in self.ledger_rows:
            day = days.setdefault(
                row.bin // self.bins_per_day,
                {"day": row.bin // self.bins_per_day, "created": 0, "processed": 0},
            )
            day["created"] += row.created_blocks
            day["processed"] += row.processed_blocks
            day.setdefault("outstanding", {})[row.kind] = row.outstanding_blocks
        for day in days.values():
            day["outstanding"] = sum(day["outstanding"].values())
        return [days[d] for d in sorted(days)]

    def summary(self) -> Dict[str, Any]:
        return {
            "policy": self.policy,
            "bins": len(self.records),
            "warmup_bins": self.warmup_bins,
            "offered_ops": self.offered,
            "violated_ops": self.violated,
            "queued_oor_ops": self.queued_oor,
            "slo_violation_fraction": self.slo_violation_fraction,
            "queued_oor_fraction": self.queued_oor_fraction,
            "violation_interval_fraction": self.violation_interval_fraction,
            "oor_interval_fraction": self.oor_interval_fraction,
            "debt": {
                "created": self.debt_created,
                "processed": self.debt_processed,
                "outstanding": self.debt_outstanding,
                "conserved": self.debt_conserved,
                "unreclaimed_blocks": self.unreclaimed_blocks,
            },
            "rejections": self.rejections,
            "daily_balance": self.daily_balance(),
            "events": self.events,
            "mmc_advisory": self.advisory.to_dict() if self.advisory else None,
        }


def make_policy(
    cfg: SimConfig, forecaster: Optional[ForecastSource] = None
) -> SchedulerPolicy:
    hw, policy = cfg.hardware, cfg.policy
    if policy.kind is PolicyKind.FIXED:
        return FixedPolicy(hw, policy.low, policy.high, policy.hysteresis)
    elif policy.kind is PolicyKind.DYNAMIC:
        source = forecaster or make_forecast_source(
            policy.forecast_method,
            cfg.forecast,
            cfg.simulation.train_days,
            policy.damped,
        )
        return DynamicPolicy(
            hw,
            cfg.context,
            source,
            replan_every=policy.replan_every,
            horizon=policy.horizon_bins,
            idle_def=policy.idle,
        )
    else:
        assert_never(policy.kind)


class Engine:
    """Interval-by-interval replay of a binned series under one policy."""

    def __init__(
        self,
        series: IntensitySeries,
        cfg: SimConfig,
        forecaster: Optional[ForecastSource] = None,
    ) -> None:
        cfg.validate()
        if not len(series):
            raise DataError("cannot simulate an empty series")
        if not math.isclose(series.interval, cfg.hardware.interval):
            raise ConfigError(
                f"series interval {series.interval}s differs from "
                f"hardware.interval {cfg.hardware.interval}s"
            )
        self.series = series
        self.cfg = cfg
        self.hw = cfg.hardware
        self.policy = make_policy(cfg, forecaster)
        self.ledger = DebtLedger(cfg.debt.costs)
        self.pool = PoolState.with_utilization(
            cfg.pool.total_blocks, cfg.pool.initial_used, cfg.pool.hard_limit_fraction
        )
        self.backlog = BinStats()
        self.write_history: List[float] = []
        self.records: List[BinRecord] = []
        self.ledger_rows: List[LedgerRow] = []
        self.created_ops = 0
        self.unreclaimed_blocks = 0

    def _admissible_fraction(self, served: BinStats, free: int) -> float:
        need = served.write_blocks + served.unmap_len / self.cfg.pool.block_size * (
            1.0 + self.cfg.debt.dmd_ratio
        )
        if need <= 0 or need + SPACE_SLACK <= free:
            return 1.0
        return max(0.0, (free - SPACE_SLACK) / need)

    def step(self, k: int) -> BinRecord:
        hw, cfg = self.hw, self.cfg
        arrivals = self.series.bins[k]
        demand = self.backlog.total_iops + arrivals.total_iops

        directive = self.policy.directive(
            k, PolicyState(self.pool, self.ledger, self.write_history, demand)
        )
        cff = directive.effective_cff(hw.fg_cores_needed(demand), hw.n_cores)
        alloc = allocate_cores(demand / hw.interval, hw, cff, k)

        # Backlog first, then this bin's arrivals.
        capacity = alloc.c_fg * hw.fg_ops_per_core
        served_old, backlog = self.backlog.split(capacity)
        served_new, unserved = arrivals.split(capacity - served_old.total_iops)

        snap = gen_snap_delete_debt(cfg.snapshots, self.write_history, k, hw.interval)
        free = self.pool.free_blocks
        if snap is not None:
            snap.tied_blocks = min(snap.blocks, free)
            free -= snap.tied
        keep = self._admissible_fraction(served_old + served_new, free)
        kept_old, held_old = served_old.hold_mutations(keep)
        kept_new, held_new = served_new.hold_mutations(keep)
        kept = kept_old + kept_new
        self.write_history.append(kept.write_blocks)

        items = [
            gen_overwrite_debt(kept, k),
            gen_unmap_debt(kept, cfg.pool.block_size, cfg.debt.dmd_ratio, k),
            snap,
        ]
        new_debt = [item for item in items if item is not None]
        self.ledger.set_limits(directive.bucket_limit)
        for item in new_debt:
            self.ledger.submit(item, directive.global_limit)
            self.created_ops += item.pending_ops

        budget = alloc.c_bg * hw.bg_ops_per_core
        inline_ops, completed = self.ledger.inline.consume(budget)
        result = dispatch(prioritize(list(self.ledger)), budget - inline_ops)
        completed.extend(result.completed)
        self.ledger.complete(completed)

        outcome = apply_interval(self.pool, kept, new_debt, completed, bin_index=k)
        if outcome.blocked_blocks:
            raise InvariantError("writes blocked after the space check", bin_index=k)
        self.pool = outcome.pool
        self.unreclaimed_blocks += outcome.unreclaimed_blocks
        if self.pool.debt_tied_blocks != self.ledger.tied_blocks:
            raise InvariantError(
                f"pool ties {self.pool.debt_tied_blocks} blocks, "
                f"queues hold {self.ledger.tied_blocks}",
                bin_index=k,
            )

        self.backlog = backlog + unserved + held_old + held_new
        record = BinRecord(
            bin=k,
            offered=arrivals.total_iops,
            served=kept.total_iops,
            queued_latency=unserved.total_iops,
            queued_oor=held_new.total_iops,
            backlog=self.backlog.total_iops,
            pool_used=self.pool.used_blocks,
            debt_tied=self.pool.debt_tied_blocks,
            pool_free=self.pool.free_blocks,
            c_fg=alloc.c_fg,
            c_bg=alloc.c_bg,
            cff=alloc.cff,
            bg_budget=budget,
            bg_ops=inline_ops + result.ops_used,
            flags="|".join(sorted(directive.flags)),
        )
        self.records.append(record)
        self.ledger_rows.extend(self.ledger.close_interval(k, self.pool))
        return record

    def run(self) -> SimMetrics:
        self.policy.reset(self.series)
        for k in range(len(self.series)):
            self.step(k)
        if not self.ledger.conservation_ok():
            raise InvariantError("debt created != processed + outstanding")

        ledger = self.ledger
        if ledger.rejections:
            logger.warning(
                "Forced %d debt items inline: %s",
                sum(ledger.rejections.values()),
                {r.value: n for r, n in ledger.rejections.items()},
            )
        if self.unreclaimed_blocks:
            logger.warning(
                "Debt processing reclaimed %d blocks more than the live data left",
                self.unreclaimed_blocks,
            )
        seconds = len(self.series) * self.hw.interval
        mean_bg = sum(r.c_bg for r in self.records) / len(self.records)
        per_day = self.series.bins_per_day
        metrics = SimMetrics(
            policy=self.policy.kind.value,
            records=self.records,
            ledger_rows=self.ledger_rows,
            plan_rows=self.policy.plan_rows(),
            events=list(self.policy.events),
            warmup_bins=int(round(self.cfg.simulation.warmup_days * per_day)),
            bins_per_day=per_day,
            debt_created={k.value: ledger.created[k] for k in DebtKind},
            debt_processed={k.value: ledger.processed[k] for k in DebtKind},
            debt_outstanding={k.value: ledger.outstanding_blocks(k) for k in DebtKind},
            rejections={r.value: n for r, n in ledger.rejections.items()},
            unreclaimed_blocks=self.unreclaimed_blocks,
            advisory=mmc_advisory(
                self.created_ops / seconds,
                self.hw.bg_core_rate,
                round(mean_bg),
                self.hw.n_cores,
            ),
        )
        logger.info(
            "%s policy: %.2f%% SLO violations, %.2f%% queued out of resources",
            metrics.policy,
            metrics.slo_violation_fraction,
            metrics.queued_oor_fraction,
        )
        return metrics


def run(
    series: IntensitySeries,
    cfg: SimConfig,
    forecaster: Optional[ForecastSource] = None,
) -> SimMetrics:
    return Engine(series, cfg, forecaster).run()


@dataclass(frozen=True)
class Comparison:
    fixed: SimMetrics
    dynamic: SimMetrics
    ratio: float
    oor_ratio: float
    degenerate: bool

    def to_dict(self) -> Dict[str, Any]:
        def number(x: float) -> Any:
            return "inf" if math.isinf(x) else x

        return {
            "fixed": {
                "slo_violation_fraction": self.fixed.slo_violation_fraction,
                "queued_oor_fraction": self.fixed.queued_oor_fraction,
            },
            "dynamic": {
                "slo_violation_fraction": self.dynamic.slo_violation_fraction,
                "queued_oor_fraction": self.dynamic.queued_oor_fraction,
            },
            "violation_reduction_ratio": number(self.ratio),
            "oor_reduction_ratio": number(self.oor_ratio),
            "degenerate": self.degenerate,
        }


def reduction_ratio(fixed: float, dynamic: float) -> Tuple[float, bool]:
    """fixed / dynamic; (1.0, True) when both are zero."""
    if dynamic == 0:
        return (1.0, True) if fixed == 0 else (math.inf, False)
    return fixed / dynamic, False


def compare_policies(
    series: IntensitySeries,
    cfg: SimConfig,
    dynamic_cfg: Optional[SimConfig] = None,
    *,
    workers: int = 1,
) -> Comparison:
    """Run the fixed and dynamic policies on the same series."""
    fixed_cfg = cfg.with_policy(PolicyKind.FIXED)
    dynamic_cfg = (dynamic_cfg or cfg).with_policy(PolicyKind.DYNAMIC)
    if dynamic_cfg.hardware != fixed_cfg.hardware:
        raise ParameterError("compared policies must share the hardware model")

    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=2) as pool:
            fixed_future = pool.submit(run, series, fixed_cfg)
            dynamic_future = pool.submit(run, series, dynamic_cfg)
            fixed, dynamic = fixed_future.result(), dynamic_future.result()
    else:
        fixed, dynamic = run(series, fixed_cfg), run(series, dynamic_cfg)

    ratio, degenerate = reduction_ratio(
        fixed.slo_violation_fraction, dynamic.slo_violation_fraction
    )
    oor_ratio, _ = reduction_ratio(
        fixed.queued_oor_fraction, dynamic.queued_oor_fraction
    )
    if degenerate:
        logger.warning("Neither policy violated its SLO; reduction ratio is degenerate")
    return Comparison(fixed, dynamic, ratio, oor_ratio, degenerate)
