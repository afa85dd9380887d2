from __future__ import annotations

import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Deque, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from bgsched.errors import InvariantError, ParameterError
from bgsched.series import BinStats
from bgsched.util import round_half_up

logger = logging.getLogger(__name__)

DEFAULT_DMD_RATIO = 0.03
DMD_RANGE = (0.02, 0.05)
PRIORITY_WINDOW = 4


class DebtKind(Enum):
    SNAP_DELETE = "snap_delete"
    OVERWRITE_GC = "overwrite_gc"
    UNMAP = "unmap"

    @property
    def reclaims_used(self) -> bool:
        """Whether processing frees live blocks besides the tied ones."""
        return self is not DebtKind.SNAP_DELETE

    @property
    def order(self) -> int:
        return list(DebtKind).index(self)


@dataclass
class DebtCosts:
    """Background ops needed per block, by kind."""

    snap_delete: float = 1.0
    overwrite_gc: float = 1.0
    unmap: float = 1.0

    def validate(self) -> None:
        for kind in DebtKind:
            if self.for_kind(kind) <= 0:
                raise ParameterError(f"cost for {kind.value} must be positive")

    def for_kind(self, kind: DebtKind) -> float:
        return float(getattr(self, kind.value))


@dataclass(eq=False)
class DebtItem:
    kind: DebtKind
    blocks: int
    created_at: int
    tied_blocks: Optional[int] = None
    remaining_ops: Optional[int] = None
    partial: bool = False

    def __post_init__(self) -> None:
        if self.blocks <= 0:
            raise ParameterError("debt items need a positive block count")
        if self.tied_blocks is None:
            self.tied_blocks = self.blocks
        if not 0 <= self.tied_blocks <= self.blocks:
            raise ParameterError("tied blocks must be within [0, blocks]")

    @property
    def tied(self) -> int:
        assert self.tied_blocks is not None
        return self.tied_blocks

    @property
    def pending_ops(self) -> int:
        assert self.remaining_ops is not None, "item was never costed"
        return self.remaining_ops


def service_cost(item: DebtItem, cost_per_block: float) -> int:
    if cost_per_block <= 0:
        raise ParameterError("cost per block must be positive")
    return math.ceil(cost_per_block * item.blocks - 1e-9)


class DebtQueue:
    """FIFO of debt items of one kind (or of any kind, for the inline queue)."""

    def __init__(
        self,
        kind: Optional[DebtKind],
        bucket_limit: float = math.inf,
        priority: float = 0.0,
    ) -> None:
        self.kind = kind
        self.bucket_limit = bucket_limit
        self.priority = priority
        self._items: Deque[DebtItem] = deque()
        self._tied = 0
        self._blocks = 0
        self._ops = 0

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[DebtItem]:
        return iter(self._items)

    def __repr__(self) -> str:
        name = self.kind.value if self.kind else "inline"
        return f"<DebtQueue {name} items={len(self)} tied={self._tied}>"

    @property
    def name(self) -> str:
        return self.kind.value if self.kind else "inline"

    @property
    def tied_blocks(self) -> int:
        return self._tied

    @property
    def blocks(self) -> int:
        return self._blocks

    @property
    def pending_ops(self) -> int:
        return self._ops

    def push(self, item: DebtItem) -> None:
        if self.kind is not None and item.kind is not self.kind:
            raise ParameterError(f"{item.kind.value} item pushed to {self.name} queue")
        self._items.append(item)
        self._tied += item.tied
        self._blocks += item.blocks
        self._ops += item.pending_ops

    def head_window(self, n: int = PRIORITY_WINDOW) -> List[DebtItem]:
        return [item for _, item in zip(range(n), self._items)]

    def consume(self, budget: int) -> Tuple[int, List[DebtItem]]:
        """Spend up to ``budget`` ops on items in FIFO order.

        Returns the ops spent and the items completed; a partly served head
        item keeps its remaining ops.
        """
        used = 0
        done: List[DebtItem] = []
        while self._items and used < budget:
            item = self._items[0]
            step = min(item.pending_ops, budget - used)
            item.remaining_ops = item.pending_ops - step
            self._ops -= step
            used += step
            if item.remaining_ops == 0:
                self._items.popleft()
                self._tied -= item.tied
                self._blocks -= item.blocks
                done.append(item)
        return used, done


class RejectReason(Enum):
    QUEUE_LIMIT = "queue-limit"
    GLOBAL_LIMIT = "global-limit"


@dataclass(frozen=True)
class Admission:
    admitted: bool
    reason: Optional[RejectReason] = None

    def __bool__(self) -> bool:
        return self.admitted


def admit(
    queue: DebtQueue,
    item: DebtItem,
    *,
    global_tied: int = 0,
    global_limit: float = math.inf,
) -> Admission:
    """Append ``item`` to ``queue`` if both the queue and global buckets allow."""
    if queue.tied_blocks + item.tied > queue.bucket_limit:
        return Admission(False, RejectReason.QUEUE_LIMIT)
    if global_tied + item.tied > global_limit:
        return Admission(False, RejectReason.GLOBAL_LIMIT)
    queue.push(item)
    return Admission(True)


@dataclass(frozen=True)
class LedgerRow:
    bin: int
    kind: str
    created_blocks: int
    processed_blocks: int
    outstanding_blocks: int
    tied_blocks: int
    pool_used: int
    pool_free: int


class DebtLedger:
    """All debt queues plus the inline queue of items refused by their bucket."""

    def __init__(self, costs: Optional[DebtCosts] = None) -> None:
        self.costs = costs or DebtCosts()
        self.costs.validate()
        self.queues: Dict[DebtKind, DebtQueue] = {k: DebtQueue(k) for k in DebtKind}
        self.inline = DebtQueue(None)
        self.created: Dict[DebtKind, int] = {k: 0 for k in DebtKind}
        self.processed: Dict[DebtKind, int] = {k: 0 for k in DebtKind}
        self.rejections: Counter[RejectReason] = Counter()
        self._interval_created: Dict[DebtKind, int] = {k: 0 for k in DebtKind}
        self._interval_processed: Dict[DebtKind, int] = {k: 0 for k in DebtKind}

    def __iter__(self) -> Iterator[DebtQueue]:
        return iter(self.queues.values())

    @property
    def tied_blocks(self) -> int:
        queued = sum(q.tied_blocks for q in self.queues.values())
        return queued + self.inline.tied_blocks

    @property
    def pending_ops(self) -> int:
        queued = sum(q.pending_ops for q in self.queues.values())
        return queued + self.inline.pending_ops

    def outstanding_blocks(self, kind: Optional[DebtKind] = None) -> int:
        if kind is None:
            return sum(self.outstanding_blocks(k) for k in DebtKind)
        inline = sum(i.blocks for i in self.inline if i.kind is kind)
        return self.queues[kind].blocks + inline

    def tied_for(self, kind: DebtKind) -> int:
        inline = sum(i.tied for i in self.inline if i.kind is kind)
        return self.queues[kind].tied_blocks + inline

    def set_limits(self, bucket_limit: float) -> None:
        for queue in self.queues.values():
            queue.bucket_limit = bucket_limit

    def submit(self, item: DebtItem, global_limit: float = math.inf) -> Admission:
        """Cost ``item``, then admit it or route it to the inline queue."""
        if item.remaining_ops is None:
            item.remaining_ops = service_cost(item, self.costs.for_kind(item.kind))
        self.created[item.kind] += item.blocks
        self._interval_created[item.kind] += item.blocks
        result = admit(
            self.queues[item.kind],
            item,
            global_tied=self.tied_blocks,
            global_limit=global_limit,
        )
        if not result:
            assert result.reason is not None
            self.rejections[result.reason] += 1
            self.inline.push(item)
        return result

    def complete(self, items: Iterable[DebtItem]) -> None:
        for item in items:
            self.processed[item.kind] += item.blocks
            self._interval_processed[item.kind] += item.blocks

    def conservation_ok(self) -> bool:
        return all(
            self.created[k] == self.processed[k] + self.outstanding_blocks(k)
            for k in DebtKind
        )

    def close_interval(self, bin_index: int, pool: PoolState) -> List[LedgerRow]:
        rows = [
            LedgerRow(
                bin=bin_index,
                kind=k.value,
                created_blocks=self._interval_created[k],
                processed_blocks=self._interval_processed[k],
                outstanding_blocks=self.outstanding_blocks(k),
                tied_blocks=self.tied_for(k),
                pool_used=pool.used_blocks,
                pool_free=pool.free_blocks,
            )
            for k in DebtKind
        ]
        self._interval_created = {k: 0 for k in DebtKind}
        self._interval_processed = {k: 0 for k in DebtKind}
        return rows


@dataclass(frozen=True)
class PoolState:
    total_blocks: int
    used_blocks: int
    debt_tied_blocks: int = 0
    hard_limit_fraction: float = 0.95

    @classmethod
    def with_utilization(
        cls, total_blocks: int, used_fraction: float, hard_limit_fraction: float = 0.95
    ) -> PoolState:
        return cls(
            total_blocks=total_blocks,
            used_blocks=round_half_up(total_blocks * used_fraction),
            hard_limit_fraction=hard_limit_fraction,
        )

    @property
    def fill_blocks(self) -> int:
        return self.used_blocks + self.debt_tied_blocks

    @property
    def free_blocks(self) -> int:
        return self.total_blocks - self.fill_blocks

    @property
    def hard_limit_blocks(self) -> int:
        return int(self.hard_limit_fraction * self.total_blocks)

    @property
    def tied_fraction(self) -> float:
        return self.debt_tied_blocks / self.total_blocks

    @property
    def fill_fraction(self) -> float:
        return self.fill_blocks / self.total_blocks

    def check(self, bin_index: Optional[int] = None) -> None:
        if self.used_blocks < 0 or self.debt_tied_blocks < 0:
            raise InvariantError("negative pool counter", bin_index=bin_index)
        if self.fill_blocks > self.total_blocks:
            raise InvariantError(
                f"pool overfilled: {self.fill_blocks} > {self.total_blocks}",
                bin_index=bin_index,
            )


@dataclass
class SnapPolicy:
    luns: int = 10
    schedule_interval: float = 3600.0
    retention: float = 3600.0

    def validate(self) -> None:
        if self.luns < 0:
            raise ParameterError("snapshot luns must not be negative")
        if not self.retention >= self.schedule_interval > 0:
            raise ParameterError("need retention >= schedule_interval > 0")


def split_load(stats: BinStats) -> Tuple[float, float]:
    """(L_read, L_write) with L_read = r * (read_iops + write_iops)."""
    load = stats.read_iops + stats.write_iops
    reads = stats.read_ratio * load
    return reads, load - reads


def gen_overwrite_debt(stats: BinStats, created_at: int = 0) -> Optional[DebtItem]:
    blocks = round_half_up((1.0 - stats.unique_write_fraction) * stats.write_blocks)
    if blocks <= 0:
        return None
    return DebtItem(DebtKind.OVERWRITE_GC, blocks, created_at)


def unmap_blocks(unmap_len: float, block_size: int, dmd_ratio: float) -> int:
    return math.ceil(unmap_len / block_size * (1.0 + dmd_ratio) - 1e-9)


def gen_unmap_debt(
    stats: BinStats,
    block_size: int = 4096,
    dmd_ratio: float = DEFAULT_DMD_RATIO,
    created_at: int = 0,
) -> Optional[DebtItem]:
    low, high = DMD_RANGE
    if not low <= dmd_ratio <= high:
        raise ParameterError(f"dmd_ratio must be in [{low}, {high}]")
    blocks = unmap_blocks(stats.unmap_len, block_size, dmd_ratio)
    if blocks <= 0:
        return None
    return DebtItem(DebtKind.UNMAP, blocks, created_at)


def snapshot_expiries(
    policy: SnapPolicy, bin_index: int, interval: float
) -> List[Tuple[float, float]]:
    """(created, expires) in seconds for snapshots expiring in ``bin_index``."""
    lo, hi = bin_index * interval, (bin_index + 1) * interval
    first = max(0, math.ceil((lo - policy.retention) / policy.schedule_interval))
    expiries = []
    j = first
    while j * policy.schedule_interval + policy.retention < hi:
        created = j * policy.schedule_interval
        expires = created + policy.retention
        if expires >= lo:
            expiries.append((created, expires))
        j += 1
    return expiries


def gen_snap_delete_debt(
    policy: SnapPolicy,
    write_history: Sequence[float],
    now: int,
    interval: float = 600.0,
) -> Optional[DebtItem]:
    """Debt of the snapshots expiring in bin ``now``.

    Each expiring snapshot holds ``luns`` times the write blocks of the bins
    it lived through. Windows reaching past ``write_history`` are summed over
    what exists and flagged partial.
    """
    if policy.luns == 0:
        return None
    written = 0.0
    partial = False
    for created, expires in snapshot_expiries(policy, now, interval):
        start, end = int(created // interval), int(expires // interval)
        if end > len(write_history):
            partial = True
        written += float(sum(write_history[start:end]))
    blocks = round_half_up(policy.luns * written)
    if blocks <= 0:
        return None
    if partial:
        logger.debug("Snapshot window at bin %d exceeds write history", now)
    return DebtItem(DebtKind.SNAP_DELETE, blocks, now, partial=partial)


@dataclass(frozen=True)
class IntervalOutcome:
    pool: PoolState
    blocked_blocks: int = 0
    unique_blocks: int = 0
    unreclaimed_blocks: int = 0


def apply_interval(
    pool: PoolState,
    stats: BinStats,
    new_debt: Iterable[DebtItem] = (),
    processed: Iterable[DebtItem] = (),
    *,
    bin_index: Optional[int] = None,
) -> IntervalOutcome:
    """Advance the pool one interval.

    New debt ties blocks first, since an item admitted this interval may
    also be drained in it. Processed items then release their tied blocks
    (and, for kinds that reclaim live data, the same number of used blocks)
    and unique writes take what free space is left; the rest is blocked.
    Used reclaim beyond the live data left is counted in
    ``unreclaimed_blocks`` rather than driving ``used_blocks`` negative.
    """
    used = pool.used_blocks
    tied = pool.debt_tied_blocks + sum(item.tied for item in new_debt)
    unreclaimed = 0
    for item in processed:
        tied -= item.tied
        if item.kind.reclaims_used:
            unreclaimed += max(0, item.blocks - used)
            used = max(0, used - item.blocks)
    if tied < 0:
        raise InvariantError(
            "processed more tied blocks than were tied", bin_index=bin_index
        )
    if used + tied > pool.total_blocks:
        raise InvariantError("new debt does not fit the pool", bin_index=bin_index)

    unique = round_half_up(stats.unique_write_blocks)
    fits = min(unique, pool.total_blocks - used - tied)
    result = replace(pool, used_blocks=used + fits, debt_tied_blocks=tied)
    result.check(bin_index)
    return IntervalOutcome(
        result,
        blocked_blocks=unique - fits,
        unique_blocks=fits,
        unreclaimed_blocks=unreclaimed,
    )
