import json
import logging
from importlib.resources import as_file, files
from pathlib import Path

from pydantic import ValidationError

from tripletsim.errors import ConfigError
from tripletsim.models.config import ExperimentConfig
from tripletsim.models.detectors import FreeRunningDetector
from tripletsim.models.sources import SourceParams
from tripletsim.sources import mu_from_g2

logger = logging.getLogger(__name__)

BUILTIN_CONFIGS = ("reference", "observed", "paper_values")

# unit efficiency, no darks, lossless arms: the detection under which g2 values are quoted
IDEAL_DETECTOR = FreeRunningDetector(label="ideal", channel=0, efficiency=1.0, dark_rate_hz=0.0)


def _format_errors(e: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
    )


def _resolve_source(source: SourceParams, window_ns: float) -> SourceParams:
    if source.mu is not None:
        return source
    assert source.g2_measured is not None
    lossless = source.model_copy(
        update={
            "herald_coupling": 1.0,
            "herald_filter_transmission": 1.0,
            "signal_coupling": 1.0,
            "signal_path_transmission": 1.0,
        }
    )
    mu = mu_from_g2(source.g2_measured, lossless, IDEAL_DETECTOR, (IDEAL_DETECTOR, IDEAL_DETECTOR), window_ns)
    return source.model_copy(update={"mu": mu})


def resolve_config(config: ExperimentConfig) -> ExperimentConfig:
    """Fill every missing mean pair number from the source's measured heralded g2."""
    window_ns = config.clock.period_ns
    return config.model_copy(
        update={
            "source1": _resolve_source(config.source1, window_ns),
            "source2": _resolve_source(config.source2, window_ns),
        }
    )


def parse_config(text: str, origin: str = "<string>") -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {origin}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"config: {origin}: {e.error_count()} invalid field(s): {_format_errors(e)}") from e
    return resolve_config(config)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}") from e
    config = parse_config(text, origin=str(path))
    logger.info(f"Loaded config {path} ({config.fingerprint()[:12]})")
    return config


def builtin_config(name: str) -> ExperimentConfig:
    """One of the configurations shipped with the package."""
    if name not in BUILTIN_CONFIGS:
        raise ConfigError(
            f"config: unknown built-in config `{name}`, expected one of {', '.join(BUILTIN_CONFIGS)}"
        )
    with as_file(files("tripletsim") / "configs" / f"{name}.json") as path:
        return load_config(path)


def config_from_arg(value: str) -> ExperimentConfig:
    """A config file path, or the name of a built-in config."""
    if Path(value).exists() or value not in BUILTIN_CONFIGS:
        return load_config(value)
    return builtin_config(value)


def dump_config(config: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(config.model_dump_json(indent=2))
    return path
