from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from bgsched.debt import (
    DEFAULT_DMD_RATIO,
    DebtCosts,
    DebtItem,
    DebtKind,
    DebtLedger,
    DebtQueue,
    PoolState,
    SnapPolicy,
    snapshot_expiries,
    unmap_blocks,
)
from bgsched.errors import ParameterError
from bgsched.series import BinStats
from bgsched.util import round_half_up

logger = logging.getLogger(__name__)

# Urgency multiplier per kind; every implemented kind is equally urgent.
SLA_URGENCY: Dict[DebtKind, float] = {kind: 1.0 for kind in DebtKind}


@dataclass
class HardwareModel:
    n_cores: int = 64
    fg_core_iops: float = 50.0
    bg_core_rate: float = 20.0
    interval: float = 600.0

    def validate(self) -> None:
        if self.n_cores < 1:
            raise ParameterError("n_cores must be positive")
        if min(self.fg_core_iops, self.bg_core_rate, self.interval) <= 0:
            raise ParameterError("core rates and interval must be positive")

    @property
    def fg_ops_per_core(self) -> float:
        return self.fg_core_iops * self.interval

    @property
    def bg_ops_per_core(self) -> int:
        return int(self.bg_core_rate * self.interval)

    def fg_cores_needed(self, ops: float) -> int:
        """Cores serving ``ops`` foreground operations in one interval."""
        need = math.ceil(ops / self.fg_ops_per_core - 1e-9)
        return min(self.n_cores, max(0, need))


@dataclass(frozen=True)
class CoreAllocation:
    c_fg: int
    c_bg: int
    cff: int = 0
    bin: int = 0


def allocate_cores(
    iops_forecast: float, hw: HardwareModel, cff: int = 0, bin_index: int = 0
) -> CoreAllocation:
    """C_FG = clamp(ceil(IOPS_a / CIOPS_FG) - CFF, 0, N); C_BG = N - C_FG."""
    if iops_forecast < 0 or cff < 0:
        raise ParameterError("iops and cff must not be negative")
    need = math.ceil(iops_forecast / hw.fg_core_iops - 1e-9)
    c_fg = min(hw.n_cores, max(0, need - cff))
    return CoreAllocation(c_fg=c_fg, c_bg=hw.n_cores - c_fg, cff=cff, bin=bin_index)


@dataclass
class IdleDef:
    min_bins: int = 12
    demand_fraction: float = 0.3

    def validate(self) -> None:
        if self.min_bins < 1 or not 0.0 < self.demand_fraction <= 1.0:
            raise ParameterError(
                "idle definition needs min_bins >= 1 and a fraction in (0, 1]"
            )


def find_idle_windows(
    demand_ops: Sequence[float], hw: HardwareModel, idle_def: Optional[IdleDef] = None
) -> List[Tuple[int, int]]:
    """[start, stop) runs of at least ``min_bins`` low-demand bins."""
    idle_def = idle_def or IdleDef()
    threshold = idle_def.demand_fraction * hw.n_cores * hw.fg_ops_per_core
    low = np.asarray(demand_ops, dtype=float) < threshold
    windows = []
    start = None
    for i, flag in enumerate(np.append(low, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start >= idle_def.min_bins:
                windows.append((start, i))
            start = None
    return windows


@dataclass
class DebtContext:
    """Parameters turning foreground writes into debt."""

    snap_policy: SnapPolicy = field(default_factory=SnapPolicy)
    costs: DebtCosts = field(default_factory=DebtCosts)
    dmd_ratio: float = DEFAULT_DMD_RATIO
    block_size: int = 4096


@dataclass(frozen=True)
class ProjectionResult:
    fill: np.ndarray
    backlog: np.ndarray
    drained: np.ndarray


class Projection:
    """Fluid dry-run of pool fill over forecast bins.

    Generated debt joins one backlog of ops; each bin drains up to its BG
    capacity, reclaiming a fixed number of fill blocks per op averaged over
    the debt mix.
    """

    def __init__(
        self,
        forecast: Sequence[BinStats],
        pool: PoolState,
        ledger: DebtLedger,
        hw: HardwareModel,
        context: DebtContext,
        write_history: Sequence[float] = (),
    ) -> None:
        if not forecast:
            raise ParameterError("projection needs at least one forecast bin")
        self.hw = hw
        self.pool = pool
        self.limit = pool.hard_limit_blocks
        costs, snap = context.costs, context.snap_policy

        demand = np.array([b.total_iops for b in forecast])
        writes = np.array([b.write_blocks for b in forecast])
        unique = np.array([b.unique_write_fraction for b in forecast])
        unmap = np.array(
            [
                unmap_blocks(b.unmap_len, context.block_size, context.dmd_ratio)
                for b in forecast
            ],
            dtype=float,
        )
        overwrite = (1.0 - unique) * writes

        history = np.concatenate([np.asarray(write_history, dtype=float), writes])
        offset = len(write_history)
        snap_blocks = np.zeros(len(forecast))
        if snap.luns:
            csum = np.concatenate([[0.0], np.cumsum(history)])
            for b in range(len(forecast)):
                expiries = snapshot_expiries(snap, offset + b, hw.interval)
                for created, expires in expiries:
                    start = int(created // hw.interval)
                    end = min(int(expires // hw.interval), len(history))
                    snap_blocks[b] += snap.luns * (csum[end] - csum[start])

        self.demand = demand
        self.fg_need = np.minimum(
            hw.n_cores,
            np.maximum(0, np.ceil(demand / hw.fg_ops_per_core - 1e-9)).astype(int),
        )
        self.spare = hw.n_cores - self.fg_need
        self.unique_blocks = unique * writes
        self.gen_fill = writes + unmap + snap_blocks
        self.gen_ops = (
            costs.overwrite_gc * overwrite
            + costs.unmap * unmap
            + costs.snap_delete * snap_blocks
        )
        reclaim = 2.0 * overwrite + 2.0 * unmap + snap_blocks

        self.backlog0 = float(ledger.pending_ops)
        outstanding_reclaim = sum(
            ledger.tied_for(k)
            + (ledger.outstanding_blocks(k) if k.reclaims_used else 0)
            for k in DebtKind
        )
        ops = self.backlog0 + self.gen_ops.sum()
        reclaimable = outstanding_reclaim + reclaim.sum()
        self.reclaim_per_op = reclaimable / ops if ops else 0.0

    def __len__(self) -> int:
        return len(self.demand)

    def run(self, bg_cores: np.ndarray) -> ProjectionResult:
        drain = np.asarray(bg_cores, dtype=float) * self.hw.bg_ops_per_core
        step = self.gen_ops - drain
        s = np.cumsum(step)
        backlog = s - np.minimum(np.minimum.accumulate(s), -self.backlog0)
        before = np.concatenate([[self.backlog0], backlog[:-1]])
        drained = before + self.gen_ops - backlog
        fill = self.pool.fill_blocks + np.cumsum(
            self.gen_fill - self.reclaim_per_op * drained
        )
        return ProjectionResult(fill=fill, backlog=backlog, drained=drained)

    def bg_cores_for_cff(self, cff: int) -> np.ndarray:
        c_fg = np.clip(self.fg_need - cff, 0, self.hw.n_cores)
        return self.hw.n_cores - c_fg

    def is_safe(self, bg_cores: np.ndarray, end: Optional[int] = None) -> bool:
        fill = self.run(bg_cores).fill[:end]
        return bool(np.all(fill <= self.limit))


@dataclass(frozen=True)
class CffResult:
    cff: int
    depleted: bool = False
    horizon_end: int = 0
    oversubscribed: Tuple[int, ...] = ()


def compute_cff(
    projection: Projection, idle_def: Optional[IdleDef] = None
) -> CffResult:
    """Smallest CFF keeping the pool under its hard limit until the next idle phase.

    The dry-run drains with every core left to BG, from the current bin up
    to the first long idle phase starting at or after the next bin.
    """
    hw = projection.hw
    windows = find_idle_windows(projection.demand, hw, idle_def)
    end = next((start for start, _ in windows if start >= 1), len(projection))
    for cff in range(hw.n_cores + 1):
        bg = projection.bg_cores_for_cff(cff)
        if projection.is_safe(bg, end):
            starved = np.nonzero(hw.n_cores - bg[:end] < projection.fg_need[:end])[0]
            stolen = tuple(int(b) for b in starved) if cff else ()
            return CffResult(cff, False, end, stolen)
    logger.warning(
        "Pool depletion unavoidable within %d bins even with all cores on BG", end
    )
    return CffResult(hw.n_cores, True, end, tuple(range(end)))


def prioritize(queues: Sequence[DebtQueue]) -> List[DebtQueue]:
    """Order queues by reclaimed tied blocks per service op, highest first.

    Ties keep the DebtKind order; empty queues score 0.
    """
    for queue in queues:
        window = queue.head_window()
        ops = sum(item.pending_ops for item in window)
        if not window or ops == 0:
            queue.priority = 0.0
            continue
        urgency = SLA_URGENCY.get(queue.kind, 1.0) if queue.kind else 1.0
        queue.priority = urgency * sum(item.tied for item in window) / ops

    def key(q: DebtQueue) -> Tuple[float, int]:
        return (-q.priority, q.kind.order if q.kind else len(DebtKind))

    return sorted(queues, key=key)


@dataclass
class DispatchResult:
    ops_used: int = 0
    budget: int = 0
    completed: List[DebtItem] = field(default_factory=list)
    per_queue: Dict[str, int] = field(default_factory=dict)

    @property
    def leftover(self) -> int:
        return self.budget - self.ops_used


def dispatch(queues: Sequence[DebtQueue], bg_budget_ops: int) -> DispatchResult:
    """Weighted round-robin over ``queues`` until the budget or the work runs out.

    Each round a queue's quota is its priority share of the budget left at
    the start of the round, but never less than its head item.
    """
    if bg_budget_ops < 0:
        raise ParameterError("budget must not be negative")
    result = DispatchResult(budget=bg_budget_ops)
    while result.ops_used < bg_budget_ops:
        active = [q for q in queues if len(q)]
        if not active:
            break
        round_budget = bg_budget_ops - result.ops_used
        weights = [q.priority for q in active]
        if sum(weights) <= 0:
            weights = [1.0] * len(active)
        total = sum(weights)
        for queue, weight in zip(active, weights):
            left = bg_budget_ops - result.ops_used
            if left <= 0:
                break
            head = next(iter(queue)).pending_ops
            quota = max(int(round_budget * weight / total), head)
            used, done = queue.consume(min(quota, left))
            result.ops_used += used
            result.completed.extend(done)
            result.per_queue[queue.name] = result.per_queue.get(queue.name, 0) + used
    return result


@dataclass(frozen=True)
class BgDirective:
    """What a policy asks of one interval."""

    cff: int = 0
    min_bg_cores: int = 0
    bucket_limit: float = math.inf
    global_limit: float = math.inf
    aggressive: bool = False
    flags: FrozenSet[str] = frozenset()

    def effective_cff(self, fg_need: int, n_cores: int) -> int:
        return max(self.cff, fg_need - (n_cores - self.min_bg_cores), 0)


def fixed_bucket_policy(
    pool: PoolState,
    hw: HardwareModel,
    low: float = 0.40,
    high: float = 0.50,
    *,
    aggressive: bool = False,
    hysteresis: float = 0.02,
) -> BgDirective:
    """Watermark policy on the tied-debt fraction of the pool.

    Between the watermarks BG claims a share of cores ramping from 0 to N;
    at or above ``high`` it takes every core until the fraction falls to
    ``high - hysteresis``.
    """
    if not 0.0 < low < high < 1.0:
        raise ParameterError("need 0 < low < high < 1")
    f = pool.tied_fraction
    limit = high * pool.total_blocks
    n = hw.n_cores
    if f >= high or (aggressive and f > high - hysteresis):
        return BgDirective(
            min_bg_cores=n,
            bucket_limit=limit,
            global_limit=limit,
            aggressive=True,
            flags=frozenset({"aggressive"}),
        )
    mandatory = 0
    if f >= low:
        mandatory = min(n, round_half_up(n * (f - low) / (high - low)))
    return BgDirective(min_bg_cores=mandatory, bucket_limit=limit, global_limit=limit)


@dataclass(frozen=True)
class SchedulePlan:
    start_bin: int
    allocations: Tuple[CoreAllocation, ...]
    planned_cores: np.ndarray
    drain_ops: np.ndarray
    bucket_limits: np.ndarray
    projected_fill: np.ndarray
    depletion: np.ndarray
    idle: np.ndarray
    guard: Optional[CffResult] = None

    @property
    def horizon(self) -> int:
        return len(self.allocations)

    @property
    def depleted(self) -> bool:
        return bool(self.depletion.any())

    def covers(self, bin_index: int) -> bool:
        return self.start_bin <= bin_index < self.start_bin + self.horizon

    def allocation(self, bin_index: int) -> CoreAllocation:
        return self.allocations[bin_index - self.start_bin]

    def flags(self, i: int) -> FrozenSet[str]:
        flags = set()
        if self.depletion[i]:
            flags.add("depletion")
        if self.idle[i]:
            flags.add("idle")
        if self.allocations[i].cff > 0:
            flags.add("steal")
        return frozenset(flags)

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {
                "bin": a.bin,
                "c_fg": a.c_fg,
                "c_bg": a.c_bg,
                "cff": a.cff,
                "bucket_limit_blocks": int(self.bucket_limits[i]),
                "drain_ops": int(self.drain_ops[i]),
                "projected_fill": int(self.projected_fill[i]),
                "flags": "|".join(sorted(self.flags(i))),
            }
            for i, a in enumerate(self.allocations)
        ]


def _episodes(mask: np.ndarray) -> List[Tuple[int, int]]:
    padded = np.concatenate([[False], mask, [False]]).astype(int)
    edges = np.diff(padded)
    return list(zip(np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]))


def dynamic_bucket_planner(
    projection: Projection,
    *,
    idle_def: Optional[IdleDef] = None,
    start_bin: int = 0,
) -> SchedulePlan:
    """Plan BG cores so projected pool fill stays under the hard limit.

    Only planned drain counts in the projection. Each pass walks the runs
    of bins over the limit and spreads the missing ops over earlier bins
    with undrained debt, cheapest forecast demand first, adding at most one
    core per bin. Foreground cores are stolen only once no earlier bin has
    idle cores left.
    """
    hw = projection.hw
    n = hw.n_cores
    horizon = len(projection)
    limit = projection.limit
    rho = projection.reclaim_per_op
    per_core = hw.bg_ops_per_core
    order = np.argsort(projection.demand, kind="stable")
    index = np.arange(horizon)
    planned = np.zeros(horizon, dtype=int)

    for _ in range(2 * n):
        result = projection.run(planned)
        over = result.fill > limit
        if not over.any() or rho <= 0:
            break
        bumped = np.zeros(horizon, dtype=bool)
        added = np.zeros(horizon)
        progress = False
        for start, stop in _episodes(over):
            excess = result.fill[start:stop].max() - limit
            excess -= rho * added[: start + 1].sum()
            if excess <= 0:
                continue
            needed = math.ceil(excess / (rho * per_core))
            usable = (
                (index <= start) & (planned < n) & ~bumped & (result.backlog > 0)
            )
            candidates = order[usable[order]]
            has_spare = planned[candidates] < projection.spare[candidates]
            if has_spare.any():
                candidates = candidates[has_spare]
            candidates = candidates[:needed]
            if not len(candidates):
                continue
            planned[candidates] += 1
            bumped[candidates] = True
            added[candidates] += per_core
            progress = True
        if not progress:
            break

    result = projection.run(planned)
    depletion = result.fill > limit
    if depletion.any():
        logger.warning(
            "Plan from bin %d cannot keep the pool under %d blocks in %d bins",
            start_bin,
            limit,
            int(depletion.sum()),
        )

    cff = np.maximum(0, planned - projection.spare)
    allocations = tuple(
        CoreAllocation(
            c_fg=int(np.clip(projection.fg_need[i] - cff[i], 0, n)),
            c_bg=n - int(np.clip(projection.fg_need[i] - cff[i], 0, n)),
            cff=int(cff[i]),
            bin=start_bin + i,
        )
        for i in range(horizon)
    )
    used = projection.pool.used_blocks + np.cumsum(projection.unique_blocks)
    idle = np.zeros(horizon, dtype=bool)
    for a, b in find_idle_windows(projection.demand, hw, idle_def):
        idle[a:b] = True
    return SchedulePlan(
        start_bin=start_bin,
        allocations=allocations,
        planned_cores=planned,
        drain_ops=planned * per_core,
        bucket_limits=np.maximum(0.0, limit - used),
        projected_fill=result.fill,
        depletion=depletion,
        idle=idle,
    )
