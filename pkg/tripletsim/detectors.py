import math

import numpy as np

from tripletsim.errors import DomainError
from tripletsim.models.detectors import DetectorParams, FreeRunningDetector, GatedDetector


def dark_click_probability(det: DetectorParams, window_ns: float) -> float:
    """Probability of at least one dark count within an observation window.

    Free-running detectors count at a constant rate; gated detectors carry a
    per-nanosecond dark probability that only applies while the gate is open,
    so the window is capped at the gate length.
    """
    if window_ns < 0:
        raise DomainError(f"detectors: window must be non-negative, got {window_ns} ns")
    match det:
        case FreeRunningDetector():
            return -math.expm1(-det.dark_rate_hz * window_ns * 1e-9)
        case GatedDetector():
            return -math.expm1(-det.dark_prob_per_ns * min(window_ns, det.gate_length_ns))
        case _:
            raise NotImplementedError(f"Unknown detector mode `{det!r}`")


def click_probability(n_photons: int, det: DetectorParams, window_ns: float) -> float:
    if n_photons < 0:
        raise DomainError(f"detectors: photon number must be non-negative, got {n_photons}")
    if isinstance(det, GatedDetector) and window_ns > det.gate_length_ns:
        raise DomainError(
            f"detectors: window {window_ns} ns exceeds the {det.gate_length_ns} ns gate of {det.label}"
        )
    no_photon_click = (1.0 - det.efficiency) ** n_photons
    return 1.0 - no_photon_click * (1.0 - dark_click_probability(det, window_ns))


def sample_click(
    rng: np.random.Generator, n_photons: int, det: DetectorParams, window_ns: float, size: int | None = None
) -> bool | np.ndarray:
    p = click_probability(n_photons, det, window_ns)
    draws = rng.random(size) < p
    return bool(draws) if size is None else draws
