import math
from functools import cache

import numpy as np
from scipy.optimize import brentq

from tripletsim.errors import DomainError
from tripletsim.models.optics import PhasematchParams, SpectralPoint
from tripletsim.models.results import PhasematchMap

FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def sfg_wavelength(lambda1_nm: float, lambda2_nm: float) -> float:
    """Sum-frequency wavelength from energy conservation, 1/l3 = 1/l1 + 1/l2."""
    if lambda1_nm <= 0 or lambda2_nm <= 0:
        raise DomainError(f"optics: wavelengths must be positive, got {lambda1_nm}, {lambda2_nm}")
    return lambda1_nm * lambda2_nm / (lambda1_nm + lambda2_nm)


def _sinc2(x: np.ndarray | float) -> np.ndarray:
    # np.sinc is the normalised sin(pi x)/(pi x)
    return np.sinc(np.asarray(x) / np.pi) ** 2


@cache
def sinc2_half_max() -> float:
    """Abscissa x_h > 0 with sinc^2(x_h) = 1/2 (about 1.39156)."""
    return brentq(lambda x: float(_sinc2(x)) - 0.5, 1.0, 2.0, xtol=1e-15)


def detuning_scale(pm: PhasematchParams) -> float:
    """beta, in rad/nm, such that scanning one input alone gives FWHM = acceptance_fwhm_nm."""
    return 2.0 * sinc2_half_max() / pm.acceptance_fwhm_nm


def _efficiency(lambda1_nm, lambda2_nm, pm: PhasematchParams) -> np.ndarray:
    detuning1 = np.asarray(lambda1_nm) - pm.lambda1_center_nm
    detuning2 = np.asarray(lambda2_nm) - pm.lambda2_center_nm
    mismatch = detuning1 + detuning2
    return _sinc2(detuning_scale(pm) * mismatch)


def phasematch_efficiency(point: SpectralPoint, pm: PhasematchParams) -> float:
    return float(_efficiency(point.lambda1_nm, point.lambda2_nm, pm))


def classical_map(lambda1_nm: np.ndarray, lambda2_nm: np.ndarray, pm: PhasematchParams,
                  power1_mw: float = 1.0, power2_mw: float = 1.0) -> PhasematchMap:
    """Classical SFG + SHG efficiency over a rectangular wavelength grid.

    The SFG term carries the factor 4 relative to each SHG term (non-degenerate
    versus degenerate mixing), so at equal powers the diagonal ridge stands four
    times above the horizontal and vertical SHG ridges.
    """
    lambda1_nm = np.asarray(lambda1_nm, dtype=float)
    lambda2_nm = np.asarray(lambda2_nm, dtype=float)
    if lambda1_nm.size == 0 or lambda2_nm.size == 0:
        raise DomainError("optics: classical map needs a non-empty wavelength grid")
    if np.any(lambda1_nm <= 0) or np.any(lambda2_nm <= 0):
        raise DomainError("optics: grid wavelengths must be positive")
    if power1_mw < 0 or power2_mw < 0:
        raise DomainError("optics: powers must be non-negative")

    l1, l2 = np.meshgrid(lambda1_nm, lambda2_nm, indexing="ij")
    return PhasematchMap(
        lambda1_nm=lambda1_nm,
        lambda2_nm=lambda2_nm,
        sfg=4.0 * power1_mw * power2_mw * _efficiency(l1, l2, pm),
        shg1=power1_mw**2 * _efficiency(l1, l1, pm),
        shg2=power2_mw**2 * _efficiency(l2, l2, pm),
    )


def classical_map_points(grid: list[SpectralPoint], pm: PhasematchParams) -> PhasematchMap:
    """classical_map over a rectangular grid given as SpectralPoints (powers taken from the first point)."""
    if not grid:
        raise DomainError("optics: classical map needs a non-empty wavelength grid")
    lambda1 = np.unique([p.lambda1_nm for p in grid])
    lambda2 = np.unique([p.lambda2_nm for p in grid])
    if lambda1.size * lambda2.size != len(grid):
        raise DomainError(f"optics: {len(grid)} points do not form a rectangular grid")
    return classical_map(lambda1, lambda2, pm, grid[0].power1_mw, grid[0].power2_mw)


def default_map_axis(pm: PhasematchParams, margin_nm: float = 1.5, step_nm: float = 0.01) -> np.ndarray:
    """Axis covering both centres plus a margin, so all three ridges are visible."""
    lo = min(pm.lambda1_center_nm, pm.lambda2_center_nm) - margin_nm
    hi = max(pm.lambda1_center_nm, pm.lambda2_center_nm) + margin_nm
    return lo + step_nm * np.arange(int(round((hi - lo) / step_nm)) + 1)


def overlap_sigma_ps(pulse_fwhm_ps: float) -> float:
    return pulse_fwhm_ps * math.sqrt(2.0) / FWHM_TO_SIGMA


def pair_conversion_probability(delay_ps: float, pm: PhasematchParams, pulse_fwhm_ps: float) -> float:
    """Probability that one photon pair with the given arrival-time offset upconverts."""
    if pulse_fwhm_ps <= 0:
        raise DomainError(f"optics: pulse_fwhm_ps must be positive, got {pulse_fwhm_ps}")
    sigma = overlap_sigma_ps(pulse_fwhm_ps)
    return pm.eta_system * math.exp(-(delay_ps**2) / (2.0 * sigma**2))
