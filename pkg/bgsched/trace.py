from __future__ import annotations

import calendar
import csv
import datetime
import gzip
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from bgsched.errors import DataError, ParameterError, TraceFormatError
from bgsched.util import round_half_up

logger = logging.getLogger(__name__)

DAY_SECONDS = 86400.0


class OpType(Enum):
    READ = "read"
    WRITE = "write"
    UNMAP = "unmap"


class TraceFormat(Enum):
    CSV_SNIA = "csv_snia"
    CSV_GENERIC = "csv_generic"


OP_ALIASES: Dict[str, OpType] = {
    "read": OpType.READ,
    "r": OpType.READ,
    "rs": OpType.READ,
    "write": OpType.WRITE,
    "w": OpType.WRITE,
    "ws": OpType.WRITE,
    "unmap": OpType.UNMAP,
    "trim": OpType.UNMAP,
    "discard": OpType.UNMAP,
    "d": OpType.UNMAP,
}

# Canonical column -> accepted header names, in order of preference.
COLUMN_ALIASES: Dict[str, Tuple[str, ...]] = {
    "timestamp": ("timestamp_s", "timestamp", "time", "ts"),
    "lun": ("lun", "lun_id", "disknumber", "disk", "device", "devno", "hostname"),
    "op": ("op", "type", "optype", "operation", "rw"),
    "offset": ("offset_bytes", "offset"),
    "length": ("length_bytes", "length", "size", "len"),
}

# Column order of headerless block traces (Timestamp,Hostname,DiskNumber,
# Type,Offset,Size,ResponseTime), timestamps in 100ns ticks.
SNIA_DEFAULT_COLUMNS: Dict[str, int] = {
    "timestamp": 0,
    "lun": 2,
    "op": 3,
    "offset": 4,
    "length": 5,
}
SNIA_TICK_SECONDS = 1e-7

GENERIC_HEADER = ("timestamp", "lun", "op", "offset", "length")


@dataclass(frozen=True)
class TraceRecord:
    timestamp: float
    lun_id: str
    op: OpType
    offset: int
    length: int

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise ParameterError(f"length must be positive, got {self.length}")
        if self.offset < 0:
            raise ParameterError(f"offset must be non-negative, got {self.offset}")
        if self.timestamp < 0:
            raise ParameterError(
                f"timestamp must be non-negative, got {self.timestamp}"
            )


@dataclass
class ParsedTrace:
    records: List[TraceRecord]
    rows: int = 0
    malformed: int = 0
    first_malformed_line: Optional[int] = None

    def __len__(self) -> int:
        return len(self.records)


def _resolve_columns(header: Sequence[str]) -> Optional[Dict[str, int]]:
    names = [h.strip().lower() for h in header]
    columns = {}
    for canonical, aliases in COLUMN_ALIASES.items():
        for alias in aliases:
            if alias in names:
                columns[canonical] = names.index(alias)
                break
        else:
            return None
    return columns


def _looks_like_header(row: Sequence[str]) -> bool:
    try:
        float(row[0])
    except (ValueError, IndexError):
        return True
    return False


def _parse_row(
    row: Sequence[str],
    columns: Dict[str, int],
    tick: float,
    device_size: Optional[int],
) -> Tuple[float, str, OpType, int, int]:
    width = max(columns.values()) + 1
    if len(row) < width:
        raise ValueError(f"expected at least {width} fields, got {len(row)}")

    timestamp = float(row[columns["timestamp"]]) * tick
    if not math.isfinite(timestamp) or timestamp < 0:
        raise ValueError("invalid timestamp")
    lun = row[columns["lun"]].strip()
    op = OP_ALIASES[row[columns["op"]].strip().lower()]
    offset = int(row[columns["offset"]])
    length = int(row[columns["length"]])
    if offset < 0 or length <= 0:
        raise ValueError("negative offset or non-positive length")
    if device_size is not None and offset + length > device_size:
        raise ValueError("extent beyond device size")
    return timestamp, lun, op, offset, length


def parse_trace(
    source: BinaryIO,
    format: TraceFormat = TraceFormat.CSV_GENERIC,
    *,
    malformed_threshold: float = 0.001,
    device_size: Optional[int] = None,
) -> ParsedTrace:
    """Parse a CSV block trace into records sorted by timestamp.

    Malformed rows are skipped and counted; more than ``malformed_threshold``
    (as a fraction of data rows) raises :class:`TraceFormatError`.
    """
    text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    try:
        rows = list(enumerate(csv.reader(text), start=1))
    except UnicodeDecodeError as e:
        raise TraceFormatError(f"trace is not valid text: {e}") from e
    finally:
        text.detach()

    rows = [(n, row) for n, row in rows if row and any(f.strip() for f in row)]
    if not rows:
        return ParsedTrace(records=[])

    tick = 1.0
    first_line, first_row = rows[0]
    if _looks_like_header(first_row):
        columns = _resolve_columns(first_row)
        if columns is None:
            raise TraceFormatError(
                f"header {first_row!r} does not name timestamp, lun, op, offset "
                "and length columns",
                line=first_line,
            )
        rows = rows[1:]
    elif format is TraceFormat.CSV_SNIA:
        columns = dict(SNIA_DEFAULT_COLUMNS)
    else:
        raise TraceFormatError("missing header row", line=first_line)

    if format is TraceFormat.CSV_SNIA:
        tick = SNIA_TICK_SECONDS

    parsed: List[Tuple[float, str, OpType, int, int]] = []
    malformed = 0
    first_malformed: Optional[int] = None
    for line, row in rows:
        try:
            parsed.append(_parse_row(row, columns, tick, device_size))
        except (ValueError, KeyError) as e:
            malformed += 1
            if first_malformed is None:
                first_malformed = line
            logger.debug("Skipping malformed row %d: %s", line, e)

    if rows and malformed / len(rows) > malformed_threshold:
        raise TraceFormatError(
            f"{malformed} of {len(rows)} rows are malformed", line=first_malformed
        )
    if malformed:
        logger.warning(
            "Skipped %d malformed rows of %d (first at line %d)",
            malformed,
            len(rows),
            first_malformed,
        )

    if format is TraceFormat.CSV_SNIA and parsed:
        base = min(p[0] for p in parsed)
        parsed = [(t - base, lun, op, off, ln) for t, lun, op, off, ln in parsed]

    parsed.sort(key=lambda p: p[0])
    records = [TraceRecord(*p) for p in parsed]
    return ParsedTrace(
        records=records,
        rows=len(rows),
        malformed=malformed,
        first_malformed_line=first_malformed,
    )


def read_trace(
    path: Union[str, Path],
    format: TraceFormat = TraceFormat.CSV_GENERIC,
    **kwargs: object,
) -> ParsedTrace:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as f:  # type: ignore[operator]
            return parse_trace(f, format, **kwargs)  # type: ignore[arg-type]
    except OSError as e:
        raise DataError(f"cannot read trace {path}: {e}") from e


def write_trace(records: Sequence[TraceRecord], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(GENERIC_HEADER)
    for r in records:
        writer.writerow((repr(r.timestamp), r.lun_id, r.op.value, r.offset, r.length))


@dataclass
class SyntheticProfile:
    """Daily curves for generating a storage workload.

    Each curve is piecewise constant over equal slices of a day; a single
    value means a flat curve.
    """

    days: float = 6.0
    interval: float = 600.0
    intensity: List[float] = field(default_factory=lambda: [100.0])
    read_ratio: List[float] = field(default_factory=lambda: [0.7])
    unique_fraction: List[float] = field(default_factory=lambda: [0.5])
    day_scales: List[float] = field(default_factory=lambda: [1.0] * 7)
    noise: float = 0.0
    luns: int = 3
    unmap_fraction: float = 0.0
    unmap_length: int = 1 << 20
    io_size: int = 4096
    block_size: int = 4096
    device_blocks: int = 1 << 24
    start_date: datetime.date = datetime.date(2024, 1, 1)

    def validate(self) -> None:
        if self.days <= 0 or self.interval <= 0:
            raise ParameterError("synthetic profile needs a positive duration")
        for name in ("intensity", "read_ratio", "unique_fraction"):
            if not getattr(self, name):
                raise ParameterError(f"{name} curve is empty")
        if len(self.day_scales) != 7:
            raise ParameterError("day_scales needs one multiplier per weekday")
        if not 0.0 <= self.unmap_fraction <= 1.0:
            raise ParameterError("unmap_fraction must be in [0, 1]")
        if self.noise < 0 or self.luns < 1 or self.io_size <= 0:
            raise ParameterError("noise, luns and io_size must be positive")

    @property
    def bins(self) -> int:
        return int(round(self.days * DAY_SECONDS / self.interval))

    @property
    def start_epoch(self) -> float:
        """Midnight UTC of ``start_date``."""
        return float(calendar.timegm(self.start_date.timetuple()))

    def curve_at(self, curve: Sequence[float], seconds: float) -> float:
        phase = seconds % DAY_SECONDS
        return curve[min(len(curve) - 1, int(phase * len(curve) / DAY_SECONDS))]

    def day_scale(self, seconds: float) -> float:
        day = int(seconds // DAY_SECONDS)
        weekday = (self.start_date + datetime.timedelta(days=day)).weekday()
        return self.day_scales[weekday]


@dataclass
class BinPlan:
    """Expected composition of one synthetic bin."""

    start: float
    reads: int
    writes: int
    unmaps: int
    unique_fraction: float

    @property
    def total(self) -> int:
        return self.reads + self.writes + self.unmaps


def plan_bins(profile: SyntheticProfile, rng: np.random.Generator) -> List[BinPlan]:
    profile.validate()
    plans = []
    for k in range(profile.bins):
        start = k * profile.interval
        mid = start + profile.interval / 2
        expected = (
            profile.curve_at(profile.intensity, mid)
            * profile.interval
            * profile.day_scale(mid)
        )
        if profile.noise > 0:
            expected *= max(0.0, 1.0 + profile.noise * rng.standard_normal())
        total = round_half_up(expected)
        unmaps = round_half_up(total * profile.unmap_fraction)
        read_ratio = profile.curve_at(profile.read_ratio, mid)
        reads = round_half_up((total - unmaps) * read_ratio)
        plans.append(
            BinPlan(
                start=start,
                reads=reads,
                writes=total - unmaps - reads,
                unmaps=unmaps,
                unique_fraction=profile.curve_at(profile.unique_fraction, mid),
            )
        )
    return plans


def synthesize_trace(profile: SyntheticProfile, seed: int) -> List[TraceRecord]:
    """Generate a record-level trace following ``profile``.

    Writes marked unique go to never-written addresses; the rest rewrite an
    address already written in the same bin, so binning recovers the
    unique-fraction curve.
    """
    rng = np.random.default_rng(seed)
    plans = plan_bins(profile, rng)
    blocks_per_io = max(1, -(-profile.io_size // profile.block_size))
    next_block = [0] * profile.luns
    records: List[TraceRecord] = []

    for plan in plans:
        n = plan.total
        if n == 0:
            continue
        if profile.noise > 0:
            times = np.sort(rng.uniform(plan.start, plan.start + profile.interval, n))
        else:
            times = plan.start + (np.arange(n) + 0.5) * profile.interval / n

        ops = np.array(
            [OpType.READ] * plan.reads
            + [OpType.WRITE] * plan.writes
            + [OpType.UNMAP] * plan.unmaps,
            dtype=object,
        )
        ops = ops[rng.permutation(n)]
        luns = rng.integers(0, profile.luns, n)

        # The first write of a bin is always fresh so rewrites have a target.
        fresh = np.zeros(plan.writes, dtype=bool)
        if plan.writes:
            n_unique = max(1, round_half_up(plan.writes * plan.unique_fraction))
            fresh[1:n_unique] = True
            fresh[1:] = fresh[1:][rng.permutation(plan.writes - 1)]
            fresh[0] = True
        written: List[Tuple[int, int]] = []

        w = 0
        for t, op, lun in zip(times, ops, luns):
            lun = int(lun)
            if op is OpType.WRITE:
                if fresh[w]:
                    block = next_block[lun]
                    next_block[lun] += blocks_per_io
                    written.append((lun, block))
                else:
                    lun, block = written[int(rng.integers(0, len(written)))]
                w += 1
                offset, length = block * profile.block_size, profile.io_size
            else:
                block = int(rng.integers(0, profile.device_blocks))
                offset = block * profile.block_size
                if op is OpType.READ:
                    length = profile.io_size
                else:
                    length = profile.unmap_length
            records.append(
                TraceRecord(
                    profile.start_epoch + float(t), f"lun{lun}", op, offset, length
                )
            )

    logger.debug("Synthesized %d records over %d bins", len(records), len(plans))
    return records
