from __future__ import annotations

import datetime
import gzip
import io

import pytest

from bgsched.errors import DataError, ParameterError, TraceFormatError
from bgsched.series import bin_series
from bgsched.trace import (
    OpType,
    SyntheticProfile,
    TraceFormat,
    TraceRecord,
    parse_trace,
    read_trace,
    synthesize_trace,
    write_trace,
)


def _source(text: str) -> io.BytesIO:
    return io.BytesIO(text.encode())


def test_parse_generic_sorts_by_timestamp():
    parsed = parse_trace(
        _source(
            "timestamp,lun,op,offset,length\n"
            "1.5,lun0,write,4096,8192\n"
            "0.5,lun1,read,0,4096\n"
            "2.0,lun0,trim,0,1048576\n"
        )
    )
    assert parsed.rows == 3
    assert parsed.malformed == 0
    assert [r.op for r in parsed.records] == [OpType.READ, OpType.WRITE, OpType.UNMAP]
    assert parsed.records[0] == TraceRecord(0.5, "lun1", OpType.READ, 0, 4096)


def test_parse_header_aliases():
    parsed = parse_trace(
        _source("Time,DiskNumber,Type,Offset,Size\n3,1,W,0,512\n")
    )
    assert parsed.records == [TraceRecord(3.0, "1", OpType.WRITE, 0, 512)]


def test_parse_snia_headerless_rebases_ticks():
    parsed = parse_trace(
        _source(
            "128166372003061629,hm,1,Read,3154152960,32768,1331\n"
            "128166372013061629,hm,1,Write,3154152960,4096,1331\n"
        ),
        TraceFormat.CSV_SNIA,
    )
    assert [r.timestamp for r in parsed.records] == pytest.approx(
        [0.0, 1.0], abs=1e-4
    )
    assert parsed.records[1].op is OpType.WRITE
    assert parsed.records[1].lun_id == "1"


def test_generic_without_header_is_rejected():
    with pytest.raises(TraceFormatError, match="missing header"):
        parse_trace(_source("1.0,lun0,read,0,4096\n"))


def test_unknown_header_is_rejected():
    with pytest.raises(TraceFormatError):
        parse_trace(_source("when,where,what\n1,2,3\n"))


def test_malformed_rows_over_threshold():
    with pytest.raises(TraceFormatError) as e:
        parse_trace(
            _source(
                "timestamp,lun,op,offset,length\n"
                "1.0,lun0,read,0,4096\n"
                "2.0,lun0,frobnicate,0,4096\n"
            )
        )
    assert e.value.line == 3
    assert "line: 3" in str(e.value)


def test_malformed_rows_under_threshold_are_skipped():
    good = "".join(f"{i}.0,lun0,write,{i * 4096},4096\n" for i in range(20))
    parsed = parse_trace(
        _source("timestamp,lun,op,offset,length\n" + good + "x,lun0,read,0,-1\n"),
        malformed_threshold=0.1,
    )
    assert len(parsed) == 20
    assert parsed.malformed == 1
    assert parsed.first_malformed_line == 22


def test_extent_beyond_device_is_malformed():
    with pytest.raises(TraceFormatError):
        parse_trace(
            _source("timestamp,lun,op,offset,length\n1,l,read,8192,4096\n"),
            device_size=8192,
        )


def test_empty_trace():
    assert len(parse_trace(_source(""))) == 0
    assert len(parse_trace(_source("timestamp,lun,op,offset,length\n"))) == 0


def test_record_validation():
    with pytest.raises(ParameterError):
        TraceRecord(0.0, "lun0", OpType.READ, 0, 0)
    with pytest.raises(ParameterError):
        TraceRecord(-1.0, "lun0", OpType.READ, 0, 512)


def test_write_then_read_gzip(tmp_path):
    records = synthesize_trace(SyntheticProfile(days=0.05, intensity=[0.5]), seed=3)
    path = tmp_path / "trace.csv.gz"
    with gzip.open(path, "wt", newline="") as f:
        write_trace(records, f)
    assert read_trace(path).records == records


def test_read_missing_trace(tmp_path):
    with pytest.raises(DataError):
        read_trace(tmp_path / "absent.csv")


def test_synthetic_trace_recovers_unique_fraction():
    profile = SyntheticProfile(
        days=0.125,
        interval=600.0,
        intensity=[1.0],
        read_ratio=[0.5],
        unique_fraction=[0.25],
    )
    records = synthesize_trace(profile, seed=7)
    series = bin_series(records, profile.interval)

    assert len(series) == profile.bins == 18
    assert series.start_epoch == profile.start_epoch
    for b in series.bins:
        assert b.total_iops == 600
        assert b.write_iops == 300
        assert b.unique_write_fraction == pytest.approx(0.25)


def test_synthetic_start_epoch_is_midnight_utc():
    profile = SyntheticProfile(start_date=datetime.date(2024, 1, 2))
    assert profile.start_epoch == 1704153600.0


def test_profile_validation():
    with pytest.raises(ParameterError):
        SyntheticProfile(day_scales=[1.0]).validate()
    with pytest.raises(ParameterError):
        SyntheticProfile(intensity=[]).validate()


def test_synthetic_trace_is_deterministic():
    profile = SyntheticProfile(
        days=0.05, intensity=[0.5], noise=0.2, unmap_fraction=0.1
    )
    first = synthesize_trace(profile, seed=11)
    assert first
    assert synthesize_trace(profile, seed=11) == first
    assert synthesize_trace(profile, seed=12) != first


def test_noiseless_bins_count_rate_times_interval():
    profile = SyntheticProfile(
        days=1.0, interval=3600.0, intensity=[0.5] * 12 + [2.0] * 12, luns=1
    )
    series = bin_series(synthesize_trace(profile, seed=0), profile.interval)

    assert len(series) == 24
    assert [b.total_iops for b in series.bins] == [1800.0] * 12 + [7200.0] * 12
