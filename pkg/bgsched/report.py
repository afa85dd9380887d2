from __future__ import annotations

import dataclasses
import json
import logging
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from bgsched.decompose import Decomposition
from bgsched.engine import BinRecord, Comparison, SimMetrics
from bgsched.metrics import ForecastErrors
from bgsched.series import IntensitySeries
from bgsched.stats import Correlogram, LagSpread
from bgsched.util import atomic_open

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

METRICS_COLUMNS = [f.name for f in dataclasses.fields(BinRecord)] + ["violations"]


def code_version() -> str:
    try:
        return metadata.version("bgsched")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def write_frame(path: PathLike, frame: pd.DataFrame) -> None:
    with atomic_open(path) as f:
        frame.to_csv(f, index=False, lineterminator="\n")
    logger.debug("Wrote %d rows to %s", len(frame), path)


def write_json(path: PathLike, data: Any) -> None:
    with atomic_open(path) as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_series(path: PathLike, series: IntensitySeries) -> None:
    write_frame(path, series.to_frame())


def write_correlogram(path: PathLike, correlogram: Correlogram, first_lag: int) -> None:
    """One row per lag; ``first_lag`` is 0 for the ACF and 1 for the PACF."""
    lags = np.arange(first_lag, first_lag + len(correlogram))
    write_frame(
        path,
        pd.DataFrame(
            {
                "lag": lags,
                "value": correlogram.values,
                "degenerate": correlogram.degenerate,
            }
        ),
    )


def write_decomposition(
    path: PathLike, observed: Sequence[float], decomposition: Decomposition
) -> None:
    write_frame(
        path,
        pd.DataFrame(
            {
                "bin": np.arange(len(observed)),
                "observed": observed,
                "trend": decomposition.trend,
                "season": decomposition.seasonal(),
                "residual": decomposition.residual,
                "trend_valid": decomposition.trend_valid,
            }
        ),
    )


def write_lag_spread(path: PathLike, spread: LagSpread) -> None:
    write_frame(
        path,
        pd.DataFrame({"y_t": spread.current, f"y_t_plus_{spread.lag}": spread.lagged}),
    )


def write_forecast(
    path: PathLike,
    actual: Mapping[str, Sequence[float]],
    predicted: Mapping[str, Sequence[float]],
    start_bin: int = 0,
) -> None:
    """Columns bin_index, then actual/yhat per channel."""
    n = len(next(iter(predicted.values())))
    columns: Dict[str, Any] = {"bin_index": np.arange(start_bin, start_bin + n)}
    for name, yhat in predicted.items():
        if name in actual:
            columns[f"{name}_actual"] = actual[name]
        columns[f"{name}_yhat"] = yhat
    write_frame(path, pd.DataFrame(columns))


def write_errors(
    path: PathLike, errors: Mapping[str, ForecastErrors], **extra: Any
) -> None:
    data: Dict[str, Any] = {name: e.to_dict() for name, e in errors.items()}
    data.update(extra)
    write_json(path, data)


def metrics_frame(metrics: SimMetrics) -> pd.DataFrame:
    rows = [
        dict(dataclasses.asdict(r), violations=r.violations) for r in metrics.records
    ]
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def write_metrics(path: PathLike, metrics: SimMetrics) -> None:
    write_frame(path, metrics_frame(metrics))


def write_ledger(path: PathLike, metrics: SimMetrics) -> None:
    rows = [dataclasses.asdict(r) for r in metrics.ledger_rows]
    columns = [
        "bin",
        "kind",
        "created_blocks",
        "processed_blocks",
        "outstanding_blocks",
        "tied_blocks",
        "pool_used",
        "pool_free",
    ]
    write_frame(path, pd.DataFrame(rows, columns=columns))


def write_plan(path: PathLike, rows: Iterable[Mapping[str, Any]]) -> None:
    columns = [
        "bin",
        "c_fg",
        "c_bg",
        "cff",
        "bucket_limit_blocks",
        "drain_ops",
        "projected_fill",
        "flags",
    ]
    write_frame(path, pd.DataFrame(list(rows), columns=columns))


def summary_data(
    metrics: SimMetrics, config: Optional[Mapping[str, Any]] = None, seed: int = 0
) -> Dict[str, Any]:
    data = metrics.summary()
    data["seed"] = seed
    data["config"] = dict(config or {})
    data["version"] = code_version()
    return data


def write_summary(
    path: PathLike,
    metrics: SimMetrics,
    config: Optional[Mapping[str, Any]] = None,
    seed: int = 0,
) -> None:
    write_json(path, summary_data(metrics, config, seed))


def write_simulation(
    out: Path,
    metrics: SimMetrics,
    config: Optional[Mapping[str, Any]] = None,
    seed: int = 0,
) -> None:
    """metrics.csv, summary.json, debt_ledger.csv and plan.csv (dynamic only)."""
    write_metrics(out / "metrics.csv", metrics)
    write_ledger(out / "debt_ledger.csv", metrics)
    if metrics.policy == "dynamic":
        write_plan(out / "plan.csv", metrics.plan_rows)
    write_summary(out / "summary.json", metrics, config, seed)


def write_comparison(
    out: Path,
    comparison: Comparison,
    config: Optional[Mapping[str, Any]] = None,
    seed: int = 0,
) -> None:
    for metrics in (comparison.fixed, comparison.dynamic):
        write_simulation(out / metrics.policy, metrics, config, seed)
    side_by_side = metrics_frame(comparison.fixed).merge(
        metrics_frame(comparison.dynamic), on="bin", suffixes=("_fixed", "_dynamic")
    )
    write_frame(out / "metrics_side_by_side.csv", side_by_side)
    data = comparison.to_dict()
    data["seed"] = seed
    data["config"] = dict(config or {})
    data["version"] = code_version()
    write_json(out / "comparison.json", data)
