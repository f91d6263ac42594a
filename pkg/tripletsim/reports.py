"""Run reports (JSON plus a text summary) and the CSV plot-data writers."""

import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import pandas as pd

from tripletsim.models.config import ExperimentConfig
from tripletsim.models.results import (
    CoincHistogram1D,
    CoincHistogram2D,
    ComparisonReport,
    DelayScanFit,
    DelayScanPoint,
    PhasematchMap,
    Provenance,
    RateReport,
    RunReport,
    SignificanceReport,
)

logger = logging.getLogger(__name__)

UTC = timezone.utc

REPORT_JSON = "report.json"
SUMMARY_TXT = "summary.txt"


def _version() -> str:
    from tripletsim import __version__

    return __version__


def build_report(
    command: str,
    *,
    config: ExperimentConfig | None = None,
    seed: int | None = None,
    rates: RateReport | None = None,
    significance: SignificanceReport | None = None,
    comparison: ComparisonReport | None = None,
    delay_scan: list[DelayScanPoint] | None = None,
    delay_fit: DelayScanFit | None = None,
    extra: dict[str, Any] | None = None,
) -> RunReport:
    return RunReport(
        command=command,
        config=config,
        rates=rates,
        significance=significance,
        comparison=comparison,
        delay_scan=delay_scan,
        delay_fit=delay_fit,
        extra=extra or {},
        provenance=Provenance(
            seed=seed,
            version=_version(),
            created_at=datetime.now(UTC).isoformat(timespec="seconds"),
            config_fingerprint=config.fingerprint() if config else None,
        ),
    )


def _fmt(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4g}"


def summarize(report: RunReport) -> str:
    lines = [f"tripletsim {report.provenance.version} - {report.command}"]
    if report.provenance.seed is not None:
        lines.append(f"seed: {report.provenance.seed}")
    if report.provenance.config_fingerprint:
        lines.append(f"config: {report.provenance.config_fingerprint[:16]}")
    if r := report.rates:
        lines += [
            "",
            "predicted threefold rates (per hour)",
            f"  signal:            {_fmt(r.signal_per_hour)}",
            f"  noise per pixel:   {_fmt(r.noise_per_hour_per_pixel)}",
            f"  peak pixel:        {_fmt(r.peak_per_hour)}",
            f"  reference (pred.): {r.predicted_reference[0]} / {r.predicted_reference[1]}",
            f"  reference (obs.):  {r.observed_reference[0]} / {r.observed_reference[1]}",
            f"herald twofold rate: {_fmt(r.herald_twofold_hz)} /s",
        ]
        lines += [f"singles {label}: {_fmt(rate)} /s" for label, rate in r.singles_hz.items()]
    if s := report.significance:
        lines += [
            "",
            f"peak pixel {s.peak_coords}: {s.peak_count} counts",
            f"background: {_fmt(s.background_mean)} per pixel over {s.n_pixels} pixels",
            f"significance: {_fmt(s.z_sigma)} sigma" + (" (zero background)" if s.z_infinite else ""),
            f"accidental tail: log10 P = {_fmt(s.tail_log10_prob)}",
        ]
    if c := report.comparison:
        lines += ["", f"simulation vs closed form (flag at |z| > {c.threshold:g})"]
        lines += [
            f"  {st.name:<22} {_fmt(st.observed):>10} {_fmt(st.expected):>10}  z={st.z:+.2f}"
            + ("  FLAGGED" if st.flagged else "")
            for st in c.statistics
        ]
    if report.delay_scan:
        lines += ["", "delay scan (ps, coincidences per s)"]
        lines += [f"  {p.delay_ps:+8.2f}  {_fmt(p.twofold_rate_hz)}" for p in report.delay_scan]
    if f := report.delay_fit:
        lines.append(f"fit: centre {f.center_ps:+.2f} ps, FWHM {f.fwhm_ps:.2f} ps")
    for key, value in report.extra.items():
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def write_report(report: RunReport, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / REPORT_JSON
    path.write_text(report.model_dump_json(indent=2))
    (out_dir / SUMMARY_TXT).write_text(summarize(report))
    logger.info(f"Wrote {path} and {SUMMARY_TXT}")
    return path


def write_histogram_csv(h: CoincHistogram2D | CoincHistogram1D, path: str | Path) -> Path:
    path = Path(path)
    h.to_frame().to_csv(path, index=False)
    return path


def write_map_csv(pm_map: PhasematchMap, path: str | Path) -> Path:
    path = Path(path)
    pm_map.to_frame().to_csv(path)
    return path


def write_delay_scan_csv(points: list[DelayScanPoint], path: str | Path) -> Path:
    path = Path(path)
    pd.DataFrame([p.model_dump() for p in points]).to_csv(path, index=False)
    return path
