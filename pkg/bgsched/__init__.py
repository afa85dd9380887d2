from bgsched.clustering import DayCluster, cluster_days, day_labels
from bgsched.debt import (
    DebtCosts,
    DebtItem,
    DebtKind,
    DebtLedger,
    DebtQueue,
    PoolState,
    SnapPolicy,
    admit,
    gen_overwrite_debt,
    gen_snap_delete_debt,
    gen_unmap_debt,
    service_cost,
)
from bgsched.decompose import Decomposition, decompose_additive
from bgsched.engine import (
    Comparison,
    Engine,
    SimConfig,
    SimMetrics,
    compare_policies,
    run,
)
from bgsched.errors import (
    BgschedError,
    ConfigError,
    DataError,
    InsufficientHistoryError,
    InvariantError,
    ParameterError,
    SeriesLengthError,
    TraceFormatError,
)
from bgsched.forecast import (
    ForecastConfig,
    ForecastModel,
    ewma_update,
    fit,
    fit_channels,
    forecast,
    forecast_channels,
)
from bgsched.holtwinters import holt_winters
from bgsched.metrics import ForecastErrors, evaluate, mpe_and_cumulative, smape
from bgsched.policy import (
    DynamicPolicy,
    FixedPolicy,
    ForecastMethod,
    PolicyKind,
    forecast_window,
)
from bgsched.queueing import erlang_c, mmc_advisory
from bgsched.scheduler import (
    HardwareModel,
    Projection,
    allocate_cores,
    compute_cff,
    dispatch,
    dynamic_bucket_planner,
    fixed_bucket_policy,
    prioritize,
)
from bgsched.series import BinStats, IntensitySeries, bin_series, synthesize_series
from bgsched.stats import autocorrelation, lag_spread, partial_autocorrelation
from bgsched.trace import (
    OpType,
    SyntheticProfile,
    TraceFormat,
    TraceRecord,
    parse_trace,
    read_trace,
    synthesize_trace,
)

__all__ = [
    "DayCluster",
    "cluster_days",
    "day_labels",
    "DebtCosts",
    "DebtItem",
    "DebtKind",
    "DebtLedger",
    "DebtQueue",
    "PoolState",
    "SnapPolicy",
    "admit",
    "gen_overwrite_debt",
    "gen_snap_delete_debt",
    "gen_unmap_debt",
    "service_cost",
    "Decomposition",
    "decompose_additive",
    "Comparison",
    "Engine",
    "SimConfig",
    "SimMetrics",
    "compare_policies",
    "run",
    "BgschedError",
    "ConfigError",
    "DataError",
    "InsufficientHistoryError",
    "InvariantError",
    "ParameterError",
    "SeriesLengthError",
    "TraceFormatError",
    "ForecastConfig",
    "ForecastModel",
    "ewma_update",
    "fit",
    "fit_channels",
    "forecast",
    "forecast_channels",
    "holt_winters",
    "ForecastErrors",
    "evaluate",
    "mpe_and_cumulative",
    "smape",
    "DynamicPolicy",
    "FixedPolicy",
    "ForecastMethod",
    "PolicyKind",
    "forecast_window",
    "erlang_c",
    "mmc_advisory",
    "HardwareModel",
    "Projection",
    "allocate_cores",
    "compute_cff",
    "dispatch",
    "dynamic_bucket_planner",
    "fixed_bucket_policy",
    "prioritize",
    "BinStats",
    "IntensitySeries",
    "bin_series",
    "synthesize_series",
    "autocorrelation",
    "lag_spread",
    "partial_autocorrelation",
    "OpType",
    "SyntheticProfile",
    "TraceFormat",
    "TraceRecord",
    "parse_trace",
    "read_trace",
    "synthesize_trace",
]
