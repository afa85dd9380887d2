from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd

from bgsched.errors import DataError, ParameterError
from bgsched.trace import (
    DAY_SECONDS,
    OpType,
    SyntheticProfile,
    TraceRecord,
    plan_bins,
)

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL = 600.0
DEFAULT_BLOCK_SIZE = 4096
DEFAULT_DEDUP_WINDOW = 6

# Forecastable per-bin channels and the BinStats field backing each.
CHANNELS: Dict[str, str] = {
    "total_iops": "total_iops",
    "write_blocks": "write_blocks",
    "read_ratio": "read_ratio",
    "unique_fraction": "unique_write_fraction",
    "unmap_len": "unmap_len",
}
RATIO_CHANNELS = frozenset({"read_ratio", "unique_fraction"})


@dataclass(frozen=True)
class BinStats:
    total_iops: float = 0.0
    read_iops: float = 0.0
    write_iops: float = 0.0
    unmap_iops: float = 0.0
    unmap_len: float = 0.0
    write_blocks: float = 0.0
    unique_write_fraction: float = 1.0
    read_ratio: float = 0.0

    @classmethod
    def from_counts(
        cls,
        *,
        read_iops: float,
        write_iops: float,
        unmap_iops: float = 0.0,
        unmap_len: float = 0.0,
        write_blocks: float = 0.0,
        unique_write_fraction: float = 1.0,
        other_iops: float = 0.0,
    ) -> BinStats:
        return cls(
            total_iops=read_iops + write_iops + unmap_iops + other_iops,
            read_iops=read_iops,
            write_iops=write_iops,
            unmap_iops=unmap_iops,
            unmap_len=unmap_len,
            write_blocks=write_blocks,
            unique_write_fraction=unique_write_fraction,
            read_ratio=read_iops / max(1.0, read_iops + write_iops),
        )

    @property
    def unique_write_blocks(self) -> float:
        return self.unique_write_fraction * self.write_blocks

    def scaled(self, fraction: float) -> BinStats:
        """Return the stats of ``fraction`` of this bin's operations.

        Ratios are unchanged; every counter is scaled.
        """
        return replace(
            self,
            total_iops=self.total_iops * fraction,
            read_iops=self.read_iops * fraction,
            write_iops=self.write_iops * fraction,
            unmap_iops=self.unmap_iops * fraction,
            unmap_len=self.unmap_len * fraction,
            write_blocks=self.write_blocks * fraction,
        )

    def split(self, ops: float) -> Tuple[BinStats, BinStats]:
        """Split into (first ``ops`` operations, the rest)."""
        if self.total_iops <= 0 or ops >= self.total_iops:
            return self, BinStats(unique_write_fraction=self.unique_write_fraction)
        if ops <= 0:
            return BinStats(unique_write_fraction=self.unique_write_fraction), self
        fraction = ops / self.total_iops
        head = replace(self.scaled(fraction), total_iops=ops)
        tail = replace(self.scaled(1.0 - fraction), total_iops=self.total_iops - ops)
        return head, tail

    def hold_mutations(self, keep: float) -> Tuple[BinStats, BinStats]:
        """Split off ``1 - keep`` of the writes and unmaps; reads stay.

        Returns (kept, held).
        """
        keep = min(1.0, max(0.0, keep))
        drop = 1.0 - keep
        held = BinStats.from_counts(
            read_iops=0.0,
            write_iops=self.write_iops * drop,
            unmap_iops=self.unmap_iops * drop,
            unmap_len=self.unmap_len * drop,
            write_blocks=self.write_blocks * drop,
            unique_write_fraction=self.unique_write_fraction,
        )
        kept = replace(
            self,
            total_iops=self.total_iops - held.total_iops,
            write_iops=self.write_iops - held.write_iops,
            unmap_iops=self.unmap_iops - held.unmap_iops,
            unmap_len=self.unmap_len - held.unmap_len,
            write_blocks=self.write_blocks - held.write_blocks,
            read_ratio=self.read_iops
            / max(1.0, self.read_iops + self.write_iops - held.write_iops),
        )
        return kept, held

    def __add__(self, other: BinStats) -> BinStats:
        write_blocks = self.write_blocks + other.write_blocks
        if write_blocks > 0:
            unique = (
                self.unique_write_blocks + other.unique_write_blocks
            ) / write_blocks
        else:
            unique = 1.0
        read_iops = self.read_iops + other.read_iops
        write_iops = self.write_iops + other.write_iops
        return BinStats(
            total_iops=self.total_iops + other.total_iops,
            read_iops=read_iops,
            write_iops=write_iops,
            unmap_iops=self.unmap_iops + other.unmap_iops,
            unmap_len=self.unmap_len + other.unmap_len,
            write_blocks=write_blocks,
            unique_write_fraction=unique,
            read_ratio=read_iops / max(1.0, read_iops + write_iops),
        )


BIN_COLUMNS = [f.name for f in fields(BinStats)]


@dataclass
class IntensitySeries:
    interval: float = DEFAULT_INTERVAL
    start_epoch: float = 0.0
    bins: List[BinStats] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.interval <= 0:
            raise ParameterError("interval must be positive")

    def __len__(self) -> int:
        return len(self.bins)

    @property
    def bins_per_day(self) -> int:
        per_day = DAY_SECONDS / self.interval
        if abs(per_day - round(per_day)) > 1e-9:
            raise ParameterError(
                f"interval {self.interval}s does not divide a day evenly"
            )
        return int(round(per_day))

    @property
    def days(self) -> float:
        return len(self.bins) / self.bins_per_day

    def channel(self, name: str) -> np.ndarray:
        try:
            attr = CHANNELS[name]
        except KeyError:
            raise ParameterError(f"unknown channel {name!r}") from None
        return np.array([getattr(b, attr) for b in self.bins], dtype=float)

    def slice(self, start: int, stop: Optional[int] = None) -> IntensitySeries:
        start = max(0, start)
        return IntensitySeries(
            interval=self.interval,
            start_epoch=self.start_epoch + start * self.interval,
            bins=self.bins[start:stop],
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(b) for b in self.bins], columns=BIN_COLUMNS)
        frame.insert(0, "bin", np.arange(len(self.bins)))
        frame.insert(1, "start", self.start_epoch + frame["bin"] * self.interval)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, interval: float) -> IntensitySeries:
        missing = set(BIN_COLUMNS) - set(frame.columns)
        if missing:
            raise DataError(f"series is missing columns: {sorted(missing)}")
        start_epoch = 0.0
        if "start" in frame and len(frame):
            start_epoch = float(frame["start"].iloc[0])
        bins = [
            BinStats(**{c: float(row[c]) for c in BIN_COLUMNS})
            for _, row in frame.iterrows()
        ]
        return cls(interval=interval, start_epoch=start_epoch, bins=bins)

    def to_json(self) -> str:
        return json.dumps(
            {
                "interval": self.interval,
                "start_epoch": self.start_epoch,
                "bins": [asdict(b) for b in self.bins],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> IntensitySeries:
        data: Dict[str, Any] = json.loads(text)
        return cls(
            interval=data["interval"],
            start_epoch=data["start_epoch"],
            bins=[BinStats(**b) for b in data["bins"]],
        )


def read_series(
    path: Union[str, Path], interval: Optional[float] = None
) -> IntensitySeries:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read series {path}: {e}") from e
    if interval is None:
        if "start" in frame and len(frame) > 1:
            interval = float(frame["start"].iloc[1] - frame["start"].iloc[0])
        else:
            interval = DEFAULT_INTERVAL
    return IntensitySeries.from_frame(frame, interval)


def bin_series(
    records: Sequence[TraceRecord],
    interval: float = DEFAULT_INTERVAL,
    block_size: int = DEFAULT_BLOCK_SIZE,
    dedup_window: int = DEFAULT_DEDUP_WINDOW,
    start_epoch: Optional[float] = None,
) -> IntensitySeries:
    """Aggregate records into contiguous fixed-width bins.

    A written block counts as unique unless the same (lun, block) address
    was written earlier within the last ``dedup_window`` bins (the current
    bin included).
    """
    if interval <= 0 or block_size <= 0 or dedup_window < 1:
        raise ParameterError("interval, block_size and dedup_window must be positive")
    if not records:
        return IntensitySeries(
            interval=interval, start_epoch=start_epoch or 0.0, bins=[]
        )

    timestamps = np.array([r.timestamp for r in records], dtype=float)
    if start_epoch is None:
        start_epoch = math.floor(timestamps.min() / interval) * interval
    if timestamps.min() < start_epoch:
        raise ParameterError("records precede start_epoch")
    index = ((timestamps - start_epoch) // interval).astype(int)
    n_bins = int(index.max()) + 1

    ops = np.array([r.op.value for r in records])
    lengths = np.array([r.length for r in records], dtype=float)
    is_read = ops == OpType.READ.value
    is_write = ops == OpType.WRITE.value
    is_unmap = ops == OpType.UNMAP.value

    def count(mask: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
        w = None if weights is None else weights[mask]
        return np.bincount(index[mask], weights=w, minlength=n_bins)

    reads = count(is_read)
    writes = count(is_write)
    unmaps = count(is_unmap)
    unmap_len = count(is_unmap, lengths)

    write_blocks = np.zeros(n_bins)
    unique_blocks = np.zeros(n_bins)
    history: Deque[Set[Tuple[str, int]]] = deque(maxlen=dedup_window - 1)
    current: Set[Tuple[str, int]] = set()
    current_bin = 0
    for i in np.argsort(timestamps, kind="stable"):
        k, record = index[i], records[i]
        if record.op is not OpType.WRITE:
            continue
        while current_bin < k:
            history.append(current)
            current = set()
            current_bin += 1
        first = record.offset // block_size
        last = (record.offset + record.length - 1) // block_size
        for block in range(first, last + 1):
            address = (record.lun_id, block)
            write_blocks[k] += 1
            if address not in current and not any(
                address in seen for seen in history
            ):
                unique_blocks[k] += 1
            current.add(address)

    bins = [
        BinStats.from_counts(
            read_iops=float(reads[k]),
            write_iops=float(writes[k]),
            unmap_iops=float(unmaps[k]),
            unmap_len=float(unmap_len[k]),
            write_blocks=float(write_blocks[k]),
            unique_write_fraction=(
                float(unique_blocks[k] / write_blocks[k]) if write_blocks[k] else 1.0
            ),
        )
        for k in range(n_bins)
    ]
    logger.debug(
        "Binned %d records into %d bins of %gs", len(records), n_bins, interval
    )
    return IntensitySeries(interval=interval, start_epoch=float(start_epoch), bins=bins)


def synthesize_series(profile: SyntheticProfile, seed: int) -> IntensitySeries:
    """Produce the binned series of ``profile`` without generating records."""
    rng = np.random.default_rng(seed)
    blocks_per_io = max(1, -(-profile.io_size // profile.block_size))
    bins = [
        BinStats.from_counts(
            read_iops=float(plan.reads),
            write_iops=float(plan.writes),
            unmap_iops=float(plan.unmaps),
            unmap_len=float(plan.unmaps * profile.unmap_length),
            write_blocks=float(plan.writes * blocks_per_io),
            unique_write_fraction=plan.unique_fraction if plan.writes else 1.0,
        )
        for plan in plan_bins(profile, rng)
    ]
    return IntensitySeries(
        interval=profile.interval, start_epoch=profile.start_epoch, bins=bins
    )
