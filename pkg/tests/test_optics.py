import math

import numpy as np
import pytest
from scipy.optimize import brentq

from tripletsim.errors import DomainError
from tripletsim.models.optics import PhasematchParams, SpectralPoint
from tripletsim.optics import (
    classical_map,
    classical_map_points,
    default_map_axis,
    detuning_scale,
    pair_conversion_probability,
    phasematch_efficiency,
    sfg_wavelength,
    sinc2_half_max,
)


def test_sfg_wavelength_energy_conservation() -> None:
    assert sfg_wavelength(1560, 1551) == pytest.approx(1560 * 1551 / 3111, abs=1e-12)
    assert round(sfg_wavelength(1560, 1551)) == 778


def test_sfg_wavelength_of_equal_inputs_is_half() -> None:
    assert sfg_wavelength(1555.5, 1555.5) == pytest.approx(777.75)


@pytest.mark.parametrize("l1, l2", [(0, 1551), (1560, -1)])
def test_sfg_wavelength_rejects_non_positive(l1: float, l2: float) -> None:
    with pytest.raises(DomainError):
        sfg_wavelength(l1, l2)


def test_sinc2_half_max_abscissa() -> None:
    x = sinc2_half_max()
    assert x == pytest.approx(1.39156, abs=1e-5)
    assert (math.sin(x) / x) ** 2 == pytest.approx(0.5, abs=1e-12)


def test_efficiency_peaks_at_the_centres() -> None:
    pm = PhasematchParams()
    point = SpectralPoint(lambda1_nm=pm.lambda1_center_nm, lambda2_nm=pm.lambda2_center_nm)
    assert phasematch_efficiency(point, pm) == pytest.approx(1.0)


def test_acceptance_bandwidth_along_one_axis() -> None:
    pm = PhasematchParams()

    def half(l1: float) -> float:
        return phasematch_efficiency(SpectralPoint(lambda1_nm=l1, lambda2_nm=pm.lambda2_center_nm), pm) - 0.5

    c = pm.lambda1_center_nm
    lo = brentq(half, c - 0.3, c, xtol=1e-12)
    hi = brentq(half, c, c + 0.3, xtol=1e-12)
    assert hi - lo == pytest.approx(0.27, abs=1e-6)


def test_classical_map_sfg_to_shg_ratio() -> None:
    pm = PhasematchParams()
    axis = default_map_axis(pm)
    pm_map = classical_map(axis, axis, pm)
    assert pm_map.peak_ratio() == pytest.approx(4.0, abs=1e-9)
    # the degenerate SHG ridges sit at the mean of the two centres
    i = int(np.argmax(pm_map.shg1.max(axis=1)))
    assert axis[i] == pytest.approx(1555.5, abs=0.005)


def test_classical_map_frame_layout() -> None:
    pm = PhasematchParams()
    axis = np.linspace(1550, 1561, 12)
    frame = classical_map(axis, axis[:5], pm).to_frame()
    assert frame.shape == (12, 5)
    assert frame.index.name == "lambda1_nm"


def test_classical_map_scales_with_power() -> None:
    pm = PhasematchParams()
    axis = default_map_axis(pm, step_nm=0.05)
    pm_map = classical_map(axis, axis, pm, power1_mw=2.0, power2_mw=1.0)
    assert pm_map.sfg.max() == pytest.approx(8.0, rel=1e-9)
    assert pm_map.shg1.max() == pytest.approx(4.0, rel=1e-9)


def test_classical_map_rejects_empty_grid() -> None:
    with pytest.raises(DomainError):
        classical_map(np.array([]), np.array([1551.0]), PhasematchParams())


def test_classical_map_points_needs_rectangular_grid() -> None:
    pm = PhasematchParams()
    grid = [SpectralPoint(lambda1_nm=l1, lambda2_nm=l2) for l1 in (1559.0, 1560.0) for l2 in (1551.0, 1552.0)]
    assert classical_map_points(grid, pm).sfg.shape == (2, 2)
    with pytest.raises(DomainError):
        classical_map_points(grid[:3], pm)


def test_pair_conversion_overlap() -> None:
    pm = PhasematchParams()
    assert pair_conversion_probability(0.0, pm, 10.0) == pytest.approx(pm.eta_system)
    # the delay scan has FWHM = pulse FWHM * sqrt(2)
    half = 10.0 * math.sqrt(2) / 2
    assert pair_conversion_probability(half, pm, 10.0) == pytest.approx(pm.eta_system / 2, rel=1e-9)
    assert pair_conversion_probability(-half, pm, 10.0) == pair_conversion_probability(half, pm, 10.0)
    assert pair_conversion_probability(100.0, pm, 10.0) < 1e-20


def test_efficiency_at_half_bandwidth_and_first_zero() -> None:
    pm = PhasematchParams()
    half = SpectralPoint(lambda1_nm=pm.lambda1_center_nm + pm.acceptance_fwhm_nm / 2, lambda2_nm=1551.0)
    assert phasematch_efficiency(half, pm) == pytest.approx(0.5, abs=1e-9)
    zero = pm.lambda2_center_nm + math.pi / detuning_scale(pm)
    assert phasematch_efficiency(SpectralPoint(lambda1_nm=1560.0, lambda2_nm=zero), pm) == pytest.approx(
        0.0, abs=1e-12
    )
