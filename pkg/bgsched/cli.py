"""Command line front end.

Every subcommand reads one input (a raw trace, a binned series or a
synthetic profile), runs library code on it and writes its results into
``--out``. Errors map to exit codes through :mod:`bgsched.errors`.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import logging
import os
from dataclasses import replace
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple

from bgsched import report
from bgsched.config import (
    RunConfig,
    load_config,
    load_profile,
    override,
    parse_sweep,
    to_plain,
)
from bgsched.decompose import decompose_additive
from bgsched.engine import compare_policies, run
from bgsched.errors import (
    BgschedError,
    ConfigError,
    DataError,
    InvariantError,
    SeriesLengthError,
)
from bgsched.forecast import save_models
from bgsched.policy import ForecastMethod, PolicyKind, forecast_window
from bgsched.series import IntensitySeries, bin_series, read_series, synthesize_series
from bgsched.stats import (
    acf_peak_lag,
    autocorrelation,
    lag_spread,
    partial_autocorrelation,
)
from bgsched.trace import (
    SyntheticProfile,
    TraceFormat,
    read_trace,
    synthesize_trace,
    write_trace,
)
from bgsched.util import atomic_open

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_WARNING = 1
DEFAULT_MAX_LAG = 200


def cmd_characterize(series: IntensitySeries, out: Path, max_lag: int) -> int:
    report.write_series(out / "series.csv", series)
    if not len(series):
        logger.warning("Input holds no records; wrote an empty series")
        return EXIT_WARNING

    status = EXIT_OK
    total = series.channel("total_iops")
    if max_lag >= len(total):
        logger.warning(
            "Only %d bins; limiting correlograms to lag %d", len(total), len(total) - 1
        )
        max_lag = len(total) - 1
    acf = autocorrelation(total, max_lag)
    pacf = partial_autocorrelation(total, max_lag)
    report.write_correlogram(out / "acf.csv", acf, first_lag=0)
    report.write_correlogram(out / "pacf.csv", pacf, first_lag=1)
    if not acf.degenerate:
        peak = acf_peak_lag(acf.values)
        logger.info("Autocorrelation peaks at lag %d (r=%.3f)", peak, acf.values[peak])

    period = series.bins_per_day
    try:
        decomposition = decompose_additive(total, period)
    except SeriesLengthError as e:
        logger.warning("Skipping decomposition: %s", e)
        status = EXIT_WARNING
    else:
        report.write_decomposition(out / "decompose.csv", total, decomposition)
    if len(total) > period:
        spread = lag_spread(total, period)
        report.write_lag_spread(out / "lag_spread.csv", spread)
        logger.info("Correlation at a one-day lag: %.3f", spread.correlation)
    return status


def cmd_forecast(
    series: IntensitySeries,
    config: RunConfig,
    out: Path,
    *,
    test_start_days: Optional[float] = None,
    test_days: Optional[float] = None,
) -> int:
    sim = config.sim
    per_day = series.bins_per_day
    train_bins = int(round(sim.simulation.train_days * per_day))
    if test_start_days is None:
        test_start = train_bins
    else:
        test_start = int(round(test_start_days * per_day))
    if test_days is None:
        horizon = len(series) - test_start
    else:
        horizon = int(round(test_days * per_day))

    method = sim.policy.forecast_method
    window = forecast_window(
        series,
        method,
        train_bins=train_bins,
        test_start=test_start,
        horizon=horizon,
        config=sim.forecast,
        damped=sim.policy.damped,
    )
    report.write_forecast(
        out / "forecast.csv", window.actual, window.predicted, window.start_bin
    )
    report.write_errors(
        out / "errors.json",
        window.errors,
        method=method.value,
        train_bins=train_bins,
        test_start=test_start,
        horizon=horizon,
        seed=sim.simulation.seed,
        version=report.code_version(),
    )
    if window.models:
        save_models(out / "models.json", window.models)
    total = window.errors["total_iops"]
    logger.info("total_iops forecast: SMAPE %.4f, MPE %s", total.smape, total.mpe)
    return EXIT_OK


def cmd_simulate(series: IntensitySeries, config: RunConfig, out: Path) -> int:
    metrics = run(series, config.sim)
    for event in metrics.events:
        logger.warning("Operator notification: %s", event)
    report.write_simulation(
        out, metrics, to_plain(config), config.sim.simulation.seed
    )
    return EXIT_OK


def cmd_compare(series: IntensitySeries, config: RunConfig, out: Path) -> int:
    sim = config.sim
    comparison = compare_policies(series, sim, workers=sim.simulation.workers)
    report.write_comparison(out, comparison, to_plain(config), sim.simulation.seed)
    logger.info(
        "SLO violations: fixed %.2f%%, dynamic %.2f%% (ratio %s)",
        comparison.fixed.slo_violation_fraction,
        comparison.dynamic.slo_violation_fraction,
        comparison.to_dict()["violation_reduction_ratio"],
    )
    return EXIT_OK


def cmd_synth(profile: SyntheticProfile, seed: int, out: Path, kind: str) -> int:
    if kind == "trace":
        records = synthesize_trace(profile, seed)
        with atomic_open(out / "trace.csv") as f:
            write_trace(records, f)
        logger.info("Wrote %d records to %s", len(records), out / "trace.csv")
    else:
        report.write_series(out / "series.csv", synthesize_series(profile, seed))
    return EXIT_OK


def _interval(args: argparse.Namespace, config: RunConfig) -> float:
    return args.interval or config.sim.hardware.interval


def _profile(args: argparse.Namespace, config: RunConfig) -> SyntheticProfile:
    profile = load_profile(args.synth) if args.synth else config.synth
    if args.interval:
        profile = replace(profile, interval=args.interval)
    return profile


def load_input(args: argparse.Namespace, config: RunConfig) -> IntensitySeries:
    if args.trace:
        parsed = read_trace(args.trace, TraceFormat(args.format))
        if parsed.malformed:
            logger.info("Parsed %d of %d rows", len(parsed), parsed.rows)
        series = bin_series(
            parsed.records, _interval(args, config), config.sim.pool.block_size
        )
    elif args.series:
        series = read_series(args.series, args.interval)
    else:
        profile = replace(_profile(args, config), interval=_interval(args, config))
        series = synthesize_series(profile, config.sim.simulation.seed)
    logger.info("Input: %d bins of %gs", len(series), series.interval)
    return series


def check_paths(args: argparse.Namespace) -> None:
    """Fail on missing inputs before anything is computed."""
    for flag, error in (
        ("config", ConfigError),
        ("synth", ConfigError),
        ("trace", DataError),
        ("series", DataError),
    ):
        path = getattr(args, flag, None)
        if path is not None and not Path(path).is_file():
            raise error(f"--{flag}: no such file {path}")


def apply_flags(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    settings: List[Tuple[str, Any]] = []
    if args.seed is not None:
        settings += [("simulation.seed", args.seed), ("forecast.seed", args.seed)]
    if args.interval is not None:
        settings.append(("hardware.interval", args.interval))
    if getattr(args, "train_days", None) is not None:
        settings.append(("simulation.train_days", args.train_days))
    if getattr(args, "policy", None):
        settings.append(("policy.kind", args.policy))
    if getattr(args, "method", None):
        settings.append(("policy.forecast_method", args.method))
    for key, value in settings:
        config = override(config, key, value)
    return config


def execute(
    args: argparse.Namespace, config: RunConfig, series: IntensitySeries, out: Path
) -> int:
    if args.command == "characterize":
        return cmd_characterize(series, out, args.max_lag)
    elif args.command == "forecast":
        return cmd_forecast(
            series,
            config,
            out,
            test_start_days=args.test_start,
            test_days=args.test_days,
        )
    elif args.command == "simulate":
        return cmd_simulate(series, config, out)
    elif args.command == "compare":
        return cmd_compare(series, config, out)
    raise ConfigError(f"unknown command {args.command!r}")


def sweep(
    args: argparse.Namespace, config: RunConfig, series: IntensitySeries, out: Path
) -> int:
    """Run one independent job per sweep value, each in ``out/key=value``."""
    key, values = parse_sweep(args.sweep)
    jobs = [(value, override(config, key, value)) for value in values]
    workers = min(len(jobs), os.cpu_count() or 1)
    logger.info("Sweeping %s over %s with %d workers", key, values, workers)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(execute, args, job, series, out / f"{key}={value}")
            for value, job in jobs
        ]
        return max(future.result() for future in futures)


def _main(args: argparse.Namespace) -> int:
    check_paths(args)
    config = apply_flags(load_config(args.config), args)
    out = Path(args.out)
    if args.command == "synth":
        return cmd_synth(
            _profile(args, config), config.sim.simulation.seed, out, args.kind
        )
    series = load_input(args, config)
    if getattr(args, "sweep", None):
        return sweep(args, config, series, out)
    return execute(args, config, series, out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="seed for every random choice")
    common.add_argument("--interval", type=float, help="bin width in seconds")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    inputs = argparse.ArgumentParser(add_help=False)
    source = inputs.add_mutually_exclusive_group(required=True)
    source.add_argument("--trace", help="block trace CSV (optionally .gz)")
    source.add_argument("--series", help="binned series CSV")
    source.add_argument("--synth", help="synthetic profile YAML")
    inputs.add_argument(
        "--format",
        choices=[f.value for f in TraceFormat],
        default=TraceFormat.CSV_GENERIC.value,
    )

    sweepable = argparse.ArgumentParser(add_help=False)
    sweepable.add_argument("--sweep", help="key=v1,v2,... over a config key")
    sweepable.add_argument("--train-days", type=float)

    parser = argparse.ArgumentParser(
        prog="bgsched", description="Background debt scheduling simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "characterize", parents=[common, inputs], help="ACF/PACF and decomposition"
    )
    p.add_argument("--max-lag", type=int, default=DEFAULT_MAX_LAG)

    p = sub.add_parser(
        "forecast", parents=[common, inputs, sweepable], help="score a forecast"
    )
    p.add_argument(
        "--method",
        choices=[ForecastMethod.EWMA.value, ForecastMethod.HOLT_WINTERS.value],
    )
    p.add_argument("--test-start", type=float, help="first test day")
    p.add_argument("--test-days", type=float, help="test span (default: rest)")

    p = sub.add_parser(
        "simulate", parents=[common, inputs, sweepable], help="run one policy"
    )
    p.add_argument("--policy", choices=[k.value for k in PolicyKind])
    p.add_argument("--method", choices=[m.value for m in ForecastMethod])

    p = sub.add_parser(
        "compare", parents=[common, inputs, sweepable], help="fixed vs dynamic"
    )
    p.add_argument("--method", choices=[m.value for m in ForecastMethod])

    p = sub.add_parser("synth", parents=[common], help="write a synthetic workload")
    p.add_argument("--synth", help="synthetic profile YAML (default: config synth)")
    p.add_argument("--kind", choices=["trace", "series"], default="series")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        return _main(args)
    except BgschedError as e:
        logger.error("%s", e)
        return e.exit_code
    except Exception:
        logger.exception("Internal error")
        return InvariantError.exit_code
