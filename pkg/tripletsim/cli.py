"""Command-line entry point: simulate | analyze | predict | pmmap | delayscan | calibrate."""

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from tripletsim.config import config_from_arg, dump_config, resolve_config
from tripletsim.errors import ConfigError, TripletSimError
from tripletsim.models.config import ExperimentConfig
from tripletsim.models.results import TimeTagStream
from tripletsim.rates import calibrate_transmissions, predict_rates
from tripletsim.reports import (
    REPORT_JSON,
    build_report,
    summarize,
    write_delay_scan_csv,
    write_histogram_csv,
    write_map_csv,
    write_report,
)
from tripletsim.timetags import export_csv, read_timetags, write_timetags
from tripletsim.tripletsim import TripletSim

logger = logging.getLogger(__name__)

CONFIG_ECHO = "config.json"


def _with_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    data = config.model_dump()
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "duration_s", None) is not None:
        data["duration_s"] = args.duration_s
    if getattr(args, "mode", None) is not None:
        data["mode"] = args.mode
    if args.bin_ps is not None:
        data["analysis"]["bin_width_ps"] = args.bin_ps
    if args.window_bins is not None:
        data["analysis"]["half_window_bins"] = args.window_bins
    try:
        return resolve_config(ExperimentConfig.model_validate(data))
    except ValidationError as e:
        raise ConfigError(f"config: invalid command-line override: {e}") from e


def _client(args: argparse.Namespace) -> TripletSim:
    config = _with_overrides(config_from_arg(args.config), args)
    return TripletSim(config, verbose=args.verbose)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args: argparse.Namespace) -> int:
    sim = _client(args)
    out = _out_dir(args)
    result = sim.simulate()
    for stream in result.streams:
        write_timetags(out / f"{stream.label}.ttag", stream)
    if args.csv:
        export_csv(out / "timetags.csv", result.streams)
    dump_config(sim.config, out / CONFIG_ECHO)
    extra = {
        "mode": result.mode,
        "slots": result.slots,
        "duration_ps": result.streams[0].duration_ps,
        "truth_counts": result.truth_counts,
    }
    if args.analyze:
        histogram, significance = sim.analyze(result.streams)
        write_histogram_csv(histogram, out / "histogram.csv")
        report = build_report(
            "simulate",
            config=sim.config,
            seed=result.seed,
            rates=sim.predict(),
            significance=significance,
            comparison=sim.compare(result, histogram, significance),
            extra=extra,
        )
    else:
        report = build_report(
            "simulate", config=sim.config, seed=result.seed, rates=sim.predict(), extra=extra
        )
    write_report(report, out)
    print(summarize(report), end="")
    return 0


def _load_streams(
    paths: Sequence[str], config: ExperimentConfig, duration_ps: int | None
) -> list[TimeTagStream]:
    streams = [read_timetags(p, label=det.label) for p, det in zip(paths, config.detectors, strict=True)]
    # TTAG files do not record the simulated span; the longest stream bounds them all
    span = duration_ps or max(s.duration_ps for s in streams)
    return [s.model_copy(update={"duration_ps": span}) for s in streams]


def _recorded_duration(tag_dir: Path) -> int | None:
    report = tag_dir / REPORT_JSON
    if not report.exists():
        return None
    return json.loads(report.read_text()).get("extra", {}).get("duration_ps")


def cmd_analyze(args: argparse.Namespace) -> int:
    tag_dir = Path(args.tags[0]) if len(args.tags) == 1 else None
    if tag_dir is not None and args.config is None and (tag_dir / CONFIG_ECHO).exists():
        args.config = str(tag_dir / CONFIG_ECHO)
    args.config = args.config or "reference"
    sim = _client(args)
    duration_ps = args.duration_ps
    if tag_dir is not None:
        paths = [str(tag_dir / f"{det.label}.ttag") for det in sim.config.detectors]
        duration_ps = duration_ps or _recorded_duration(tag_dir)
    elif len(args.tags) == 3:
        paths = args.tags
    else:
        raise ConfigError("cli: analyze takes one directory or three TTAG files (D1 D2 D3)")
    out = _out_dir(args)
    streams = _load_streams(paths, sim.config, duration_ps)
    histogram, significance = sim.analyze(streams)
    write_histogram_csv(histogram, out / "histogram.csv")
    hours = histogram.duration_s / 3600.0
    rates = sim.predict()
    report = build_report(
        "analyze",
        config=sim.config,
        rates=rates,
        significance=significance,
        extra={
            "hours": hours,
            "singles_hz": {s.label: s.rate_hz() for s in streams},
            "expected_signal": rates.expected_signal_counts(hours),
            "expected_peak": rates.expected_peak_counts(hours),
            "expected_background": rates.expected_background_mean(hours),
        },
    )
    write_report(report, out)
    print(summarize(report), end="")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    sim = _client(args)
    report = build_report("predict", config=sim.config, rates=sim.predict())
    write_report(report, _out_dir(args))
    print(summarize(report), end="")
    return 0


def cmd_pmmap(args: argparse.Namespace) -> int:
    sim = _client(args)
    axis = None
    if args.range_nm is not None:
        lo, hi = args.range_nm
        axis = lo + args.step_nm * np.arange(int(round((hi - lo) / args.step_nm)) + 1)
    pm_map = sim.phasematch_map(axis, axis, args.power1_mw, args.power2_mw)
    out = _out_dir(args)
    write_map_csv(pm_map, out / "pmmap.csv")
    report = build_report("pmmap", config=sim.config, extra={"sfg_to_shg_peak_ratio": pm_map.peak_ratio()})
    write_report(report, out)
    print(summarize(report), end="")
    return 0


def cmd_delayscan(args: argparse.Namespace) -> int:
    sim = _client(args)
    delays = None
    if args.delays_ps is not None:
        start, stop, n = args.delays_ps
        delays = np.linspace(start, stop, int(n)).tolist()
    points, fit = sim.delay_scan(delays)
    out = _out_dir(args)
    write_delay_scan_csv(points, out / "delayscan.csv")
    report = build_report(
        "delayscan", config=sim.config, seed=sim.config.seed, delay_scan=points, delay_fit=fit
    )
    write_report(report, out)
    print(summarize(report), end="")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    sim = _client(args)
    calibrated = calibrate_transmissions(sim.config, args.peak_per_hour, args.noise_per_hour)
    out = _out_dir(args)
    dump_config(calibrated, out / CONFIG_ECHO)
    report = build_report(
        "calibrate",
        config=calibrated,
        rates=predict_rates(calibrated),
        extra={
            "herald_filter_transmission": calibrated.source1.herald_filter_transmission,
            "eta_system": calibrated.phasematch.eta_system,
        },
    )
    write_report(report, out)
    print(summarize(report), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", default=None, help="config JSON path or built-in name (default: reference)"
    )
    common.add_argument("--out", default="tripletsim-out", help="output directory")
    common.add_argument("--bin-ps", type=float, default=None, help="histogram bin width in ps")
    common.add_argument("--window-bins", type=int, default=None, help="histogram half window in bins")
    common.add_argument("--verbose", action="store_true")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--duration-s", type=float, default=None)
    run.add_argument("--mode", choices=["full", "conditioned"], default=None)

    parser = argparse.ArgumentParser(prog="tripletsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, run], help="simulate time tags")
    p.add_argument("--analyze", action="store_true", help="also analyze and compare with the rate model")
    p.add_argument("--csv", action="store_true", help="also export channel,timestamp_ps CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="threefold histogram and significance")
    p.add_argument("tags", nargs="+", help="simulate output directory, or D1 D2 D3 TTAG files")
    p.add_argument("--duration-ps", type=int, default=None, help="span of the recording")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("predict", parents=[common], help="closed-form rates")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("pmmap", parents=[common], help="classical SFG/SHG map")
    p.add_argument("--range-nm", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--step-nm", type=float, default=0.01)
    p.add_argument("--power1-mw", type=float, default=1.0)
    p.add_argument("--power2-mw", type=float, default=1.0)
    p.set_defaults(func=cmd_pmmap)

    p = sub.add_parser("delayscan", parents=[common, run], help="seeded delay scan")
    p.add_argument("--delays-ps", type=float, nargs=3, default=None, metavar=("START", "STOP", "N"))
    p.set_defaults(func=cmd_delayscan)

    p = sub.add_parser("calibrate", parents=[common], help="fit the free transmissions to target rates")
    p.add_argument("--peak-per-hour", type=float, default=0.40)
    p.add_argument("--noise-per-hour", type=float, default=0.20)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "analyze" and args.config is None:
        args.config = "reference"
    try:
        return args.func(args)
    except TripletSimError as e:
        print(f"tripletsim: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
