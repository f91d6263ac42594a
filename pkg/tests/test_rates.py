import math

import numpy as np
import pytest

from tests.helpers import boosted_config, make_config
from tripletsim.analysis import analyze_threefold
from tripletsim.detectors import dark_click_probability
from tripletsim.errors import CalibrationError, ConfigMismatchError, DomainError
from tripletsim.rates import (
    calibrate_transmissions,
    compare_mc_analytic,
    observed_consistency,
    predict_rates,
    signal_rate_hz,
    slot_probabilities,
)
from tripletsim.simulation import simulate_conditioned


def test_reference_prediction(reference) -> None:
    report = predict_rates(reference)
    assert report.peak_per_hour == pytest.approx(0.40, rel=0.1)
    assert report.noise_per_hour_per_pixel == pytest.approx(0.20, rel=0.1)
    assert report.predicted_pair() == (report.peak_per_hour, report.noise_per_hour_per_pixel)
    assert report.peak_per_hour == pytest.approx(report.signal_per_hour + report.noise_per_hour_per_pixel)


def test_observed_prediction_matches_the_counts(observed) -> None:
    report = predict_rates(observed)
    assert report.expected_peak_counts(260) == pytest.approx(80, rel=0.02)
    assert report.expected_background_mean(260) == pytest.approx(35, rel=0.02)


def test_stated_values_are_noise_dominated(paper_values) -> None:
    report = predict_rates(paper_values)
    assert report.noise_per_hour_per_pixel == pytest.approx(0.30, rel=0.1)
    assert report.signal_per_hour < report.noise_per_hour_per_pixel


def test_signal_rate_closed_form(reference) -> None:
    s1, s2 = reference.source1, reference.source2
    expected = (
        430e6
        * 0.015
        * 0.018
        * (0.5 * 0.81 * 0.6) ** 2
        * 0.5**2
        * reference.phasematch.eta_system
        * reference.d3.efficiency
    )
    assert s1.mu == 0.015 and s2.mu == 0.018
    assert signal_rate_hz(reference) == pytest.approx(expected, rel=1e-12)


def test_slot_probabilities_are_consistent(reference) -> None:
    slot = slot_probabilities(reference)
    assert slot.d3_click == pytest.approx(slot.joint.sum())
    assert slot.photon_click == pytest.approx(slot.joint[1::2].sum())
    assert slot.peak_pixel == pytest.approx(slot.joint[6] + slot.joint[7])
    assert slot.d3_dark == pytest.approx(dark_click_probability(reference.d3, reference.clock.period_ns))
    # herald marginals recovered from the joint law need the non-click terms too, so just bound them
    assert 0 < slot.true_triple < slot.herald1 * slot.herald2
    q1, q2 = slot.d3_with_heralds
    # a D3 photon click makes a same-pulse herald click more likely
    assert slot.d3_click * slot.herald1 < q1 < min(slot.d3_click, slot.herald1)
    assert slot.d3_click * slot.herald2 < q2 < min(slot.d3_click, slot.herald2)


def test_noise_is_linear_in_the_pixel_width(reference) -> None:
    narrow = make_config(analysis={"bin_width_ps": reference.bin_width_ps / 2})
    assert predict_rates(narrow).noise_per_hour_per_pixel == pytest.approx(
        predict_rates(reference).noise_per_hour_per_pixel / 2, rel=1e-6
    )


def test_observed_consistency() -> None:
    peak, noise = observed_consistency(80, 35, 260)
    assert (round(peak, 2), round(noise, 2)) == (0.31, 0.13)
    peak, noise = observed_consistency(104, 52, 260)
    assert (round(peak, 2), round(noise, 2)) == (0.40, 0.20)
    with pytest.raises(DomainError):
        observed_consistency(80, 35, 0)


def test_calibration_reproduces_the_reference(paper_values) -> None:
    calibrated = calibrate_transmissions(paper_values, 0.40, 0.20)
    assert calibrated.source1.herald_filter_transmission == pytest.approx(0.81, rel=0.01)
    assert calibrated.source2.herald_filter_transmission == calibrated.source1.herald_filter_transmission
    assert calibrated.phasematch.eta_system == pytest.approx(5.4e-8, rel=0.01)
    report = predict_rates(calibrated)
    assert report.peak_per_hour == pytest.approx(0.40, rel=1e-6)
    assert report.noise_per_hour_per_pixel == pytest.approx(0.20, rel=1e-6)


def test_calibration_reproduces_the_observation(paper_values) -> None:
    calibrated = calibrate_transmissions(paper_values, 80 / 260, 35 / 260)
    assert calibrated.source1.herald_filter_transmission == pytest.approx(0.6648, rel=0.01)
    assert calibrated.phasematch.eta_system == pytest.approx(6.94e-8, rel=0.01)


@pytest.mark.parametrize("peak, noise", [(0.2, 0.3), (0.4, 0.0), (50.0, 10.0)])
def test_calibration_rejects_unreachable_targets(paper_values, peak: float, noise: float) -> None:
    with pytest.raises(CalibrationError):
        calibrate_transmissions(paper_values, peak, noise)


def test_comparison_refuses_another_config() -> None:
    config = boosted_config()
    result = simulate_conditioned(config, 0.01, seed=1)
    h, report = analyze_threefold(*result.streams, config.analysis)
    with pytest.raises(ConfigMismatchError):
        compare_mc_analytic(result, h, report, predict_rates(boosted_config(mu=0.06)))


def test_comparison_flags_a_planted_excess() -> None:
    config = boosted_config()
    result = simulate_conditioned(config, 0.05, seed=2)
    h, report = analyze_threefold(*result.streams, config.analysis)
    expected = result.slots * predict_rates(config).peak_pixel_prob
    counts = h.counts.copy()
    counts[5, 5] += int(10 * math.sqrt(expected)) + 10
    planted = h.model_copy(update={"counts": counts})
    comparison = compare_mc_analytic(result, planted, report, predict_rates(config))
    assert [s.name for s in comparison.flagged] == ["peak_pixel"]
    assert comparison.get("peak_pixel").z > 5
    assert np.isfinite(comparison.get("true_triples").z)


def _with_d3_efficiency(efficiency: float):
    detectors = make_config().model_dump()["detectors"]
    detectors[2]["efficiency"] = efficiency
    return make_config(detectors=detectors)


@pytest.mark.parametrize(
    "halved",
    [
        {"source1": {"mu": 0.0075}},
        {"source2": {"mu": 0.009}},
        {"source1": {"herald_coupling": 0.25}},
        {"source2": {"signal_coupling": 0.25}},
        {"phasematch": {"eta_system": 0.5 * make_config().phasematch.eta_system}},
    ],
)
def test_signal_is_linear_in_each_factor(reference, halved: dict) -> None:
    assert signal_rate_hz(make_config(**halved)) == pytest.approx(0.5 * signal_rate_hz(reference), rel=1e-12)


def test_signal_is_linear_in_the_d3_efficiency(reference) -> None:
    scaled = _with_d3_efficiency(0.5 * reference.d3.efficiency)
    assert signal_rate_hz(scaled) == pytest.approx(0.5 * signal_rate_hz(reference), rel=1e-12)


def test_noise_ignores_conversion_and_d3_efficiency(reference) -> None:
    noise = predict_rates(reference).noise_per_hour_per_pixel
    converted = make_config(phasematch={"eta_system": 10 * reference.phasematch.eta_system})
    assert predict_rates(converted).noise_per_hour_per_pixel == noise
    assert predict_rates(_with_d3_efficiency(0.1)).noise_per_hour_per_pixel == noise
