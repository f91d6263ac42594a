"""Config builders and synthetic streams shared by the tests."""

from typing import Any

import numpy as np

from tripletsim.config import builtin_config
from tripletsim.models.config import ExperimentConfig
from tripletsim.models.results import TimeTagStream


def _merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def make_config(**overrides: Any) -> ExperimentConfig:
    """Reference config with nested overrides, e.g. make_config(source1={"mu": 0.05})."""
    return ExperimentConfig.model_validate(_merge(builtin_config("reference").model_dump(), overrides))


def boosted_config(
    mu: float = 0.05,
    eta_system: float = 1e-3,
    d3_dark_hz: float = 5e5,
    coupling: float = 1.0,
    half_window_bins: int = 5,
) -> ExperimentConfig:
    """Short runs with enough signal and background to test statistics in well under a second."""
    source = {
        "mu": mu,
        "herald_coupling": coupling,
        "herald_filter_transmission": 1.0,
        "signal_coupling": coupling,
    }
    detectors = builtin_config("reference").model_dump()["detectors"]
    detectors[2]["dark_rate_hz"] = d3_dark_hz
    return make_config(
        source1=source,
        source2=source,
        phasematch={"eta_system": eta_system},
        detectors=detectors,
        analysis={"half_window_bins": half_window_bins},
    )


def dark_free(config: ExperimentConfig) -> ExperimentConfig:
    detectors = config.model_dump()["detectors"]
    detectors[0]["dark_prob_per_ns"] = 0.0
    detectors[1]["dark_prob_per_ns"] = 0.0
    detectors[2]["dark_rate_hz"] = 0.0
    return ExperimentConfig.model_validate(_merge(config.model_dump(), {"detectors": detectors}))


def stream(
    times: list[int] | np.ndarray, label: str = "D3", channel: int = 3, duration_ps: int | None = None
) -> TimeTagStream:
    times = np.asarray(times, dtype=np.int64)
    if duration_ps is None:
        duration_ps = int(times.max()) + 1 if times.size else 1
    return TimeTagStream(label=label, channel=channel, timestamps_ps=times, duration_ps=duration_ps)
