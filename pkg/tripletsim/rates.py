"""Closed-form expected rates and the Monte Carlo comparison harness."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from tripletsim.detectors import dark_click_probability
from tripletsim.errors import CalibrationError, ConfigMismatchError, DomainError
from tripletsim.models.config import ExperimentConfig
from tripletsim.models.results import (
    ComparisonReport,
    CoincHistogram2D,
    RateReport,
    SignificanceReport,
    SimulationResult,
    StatisticComparison,
)
from tripletsim.optics import pair_conversion_probability
from tripletsim.sources import emission_table, herald_click_probability, require_mu

logger = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600.0
CALIBRATION_BOUNDS = (0.1, 1.0)


@dataclass(frozen=True)
class SlotProbabilities:
    """Exact per-pulse probabilities shared by the rate model and the conditioned simulator."""

    herald1: float
    herald2: float
    d3_dark: float
    d3_click: float
    photon_click: float
    # joint[c1 * 4 + c2 * 2 + photon] = P(herald1 = c1, herald2 = c2, D3 photon = photon, D3 click)
    joint: np.ndarray

    @property
    def true_triple(self) -> float:
        return float(self.joint[7])

    @property
    def peak_pixel(self) -> float:
        return float(self.joint[6] + self.joint[7])

    @property
    def d3_with_heralds(self) -> tuple[float, float]:
        """P(D3 click and herald1 click), P(D3 click and herald2 click) in the same pulse."""
        return float(self.joint[4:].sum()), float(self.joint[[2, 3, 6, 7]].sum())


def d3_conversion_probability(config: ExperimentConfig, delay_ps: float | None = None) -> float:
    """Per photon pair: upconverted and detected at D3."""
    delay = config.residual_delay_ps if delay_ps is None else delay_ps
    overlap = pair_conversion_probability(delay, config.phasematch, config.clock.pulse_fwhm_ps)
    return overlap * config.d3.efficiency


def slot_probabilities(config: ExperimentConfig) -> SlotProbabilities:
    window_ns = config.clock.period_ns
    e1 = emission_table(config.source1, config.d1, window_ns)
    e2 = emission_table(config.source2, config.d2, window_ns)
    r = d3_conversion_probability(config)
    k1 = np.arange(e1.shape[1])
    k2 = np.arange(e2.shape[1])
    no_photon = (1.0 - r) ** np.outer(k1, k2)
    d3_dark = dark_click_probability(config.d3, window_ns)

    joint = np.zeros(8)
    for c1 in (0, 1):
        for c2 in (0, 1):
            quiet = float(e1[c1] @ no_photon @ e2[c2])
            lit = float(e1[c1] @ (1.0 - no_photon) @ e2[c2])
            joint[c1 * 4 + c2 * 2] = quiet * d3_dark
            joint[c1 * 4 + c2 * 2 + 1] = lit
    photon_click = float(joint[1::2].sum())
    return SlotProbabilities(
        herald1=herald_click_probability(config.source1, config.d1, window_ns),
        herald2=herald_click_probability(config.source2, config.d2, window_ns),
        d3_dark=d3_dark,
        d3_click=float(joint.sum()),
        photon_click=photon_click,
        joint=joint,
    )


def signal_rate_hz(config: ExperimentConfig) -> float:
    """R_signal = f mu1 mu2 H1 H2 T1 T2 eta_SFG eta_D3, first order in both mean pair numbers."""
    s1, s2 = config.source1, config.source2
    h1 = s1.herald_transmission * config.d1.efficiency
    h2 = s2.herald_transmission * config.d2.efficiency
    return (
        config.clock.repetition_rate_hz
        * require_mu(s1)
        * require_mu(s2)
        * h1
        * h2
        * s1.signal_transmission
        * s2.signal_transmission
        * d3_conversion_probability(config)
    )


def predict_rates(config: ExperimentConfig) -> RateReport:
    f = config.clock.repetition_rate_hz
    slot = slot_probabilities(config)
    herald_twofold = f * slot.herald1 * slot.herald2
    d3_dark_per_bin = dark_click_probability(config.d3, config.bin_width_ps / 1e3)
    signal = signal_rate_hz(config) * SECONDS_PER_HOUR
    noise = herald_twofold * d3_dark_per_bin * SECONDS_PER_HOUR
    logger.info(f"Predicted {signal:.4g} signal and {noise:.4g} noise threefolds per hour and pixel")
    return RateReport(
        signal_per_hour=signal,
        noise_per_hour_per_pixel=noise,
        peak_per_hour=signal + noise,
        singles_hz={
            config.d1.label: f * slot.herald1,
            config.d2.label: f * slot.herald2,
            config.d3.label: f * slot.d3_click,
        },
        herald_twofold_hz=herald_twofold,
        slot_rate_hz=f,
        herald_click_prob=(slot.herald1, slot.herald2),
        d3_click_prob=slot.d3_click,
        d3_herald_prob=slot.d3_with_heralds,
        peak_pixel_prob=slot.peak_pixel,
        true_triple_prob=slot.true_triple,
        config_fingerprint=config.fingerprint(),
    )


def observed_consistency(peak_count: float, background_mean: float, hours: float) -> tuple[float, float]:
    """Peak-pixel and background-pixel counts turned into per-hour rates."""
    if hours <= 0:
        raise DomainError(f"rates: integration time must be positive, got {hours} h")
    return peak_count / hours, background_mean / hours


def _compare(
    name: str, observed: float, expected: float, sigma: float, threshold: float
) -> StatisticComparison:
    if sigma > 0:
        z = (observed - expected) / sigma
    else:
        z = 0.0 if observed == expected else math.copysign(math.inf, observed - expected)
    return StatisticComparison(
        name=name, observed=observed, expected=expected, sigma=sigma, z=z, flagged=abs(z) > threshold
    )


def _background_pixel_prob(
    histogram: CoincHistogram2D, significance: SignificanceReport, report: RateReport
) -> float:
    """Per-pulse expectation averaged over the background pixels.

    A D3 click and a herald click in the same pulse are correlated through the photon pair,
    so the zero-offset row and column sit above the flat accidental level.
    """
    p1, p2 = report.herald_click_prob
    q1, q2 = report.d3_herald_prob
    tau31, tau32 = np.meshgrid(histogram.tau31_offsets, histogram.tau32_offsets, indexing="ij")
    e1, e2 = significance.peak_coords
    radius = significance.exclusion_radius
    used = ~((np.abs(tau31 - e1) <= radius) & (np.abs(tau32 - e2) <= radius))
    prob = np.full(tau31.shape, report.d3_click_prob * p1 * p2)
    prob[(tau31 == 0) & (tau32 != 0)] = q1 * p2
    prob[(tau31 != 0) & (tau32 == 0)] = q2 * p1
    prob[(tau31 == 0) & (tau32 == 0)] = report.peak_pixel_prob
    if not used.any():
        return 0.0
    return float(prob[used].mean())


def compare_mc_analytic(
    sim: SimulationResult,
    histogram: CoincHistogram2D,
    significance: SignificanceReport,
    report: RateReport,
    herald_twofold_count: int | None = None,
    threshold: float = 5.0,
) -> ComparisonReport:
    """Per-statistic z-scores of simulated counts against the exact expectations, with Poisson errors."""
    if sim.config_fingerprint != report.config_fingerprint:
        raise ConfigMismatchError("rates: simulation and rate report come from different configurations")
    n = sim.slots
    p1, p2 = report.herald_click_prob
    d1, d2, d3 = sim.streams
    stats: list[StatisticComparison] = []

    if sim.mode == "full":
        for stream, p in ((d1, p1), (d2, p2)):
            stats.append(_compare(f"singles_{stream.label}", len(stream), n * p, math.sqrt(n * p), threshold))
        if herald_twofold_count is not None:
            expected = n * p1 * p2
            stats.append(
                _compare("herald_twofold", herald_twofold_count, expected, math.sqrt(expected), threshold)
            )
    else:
        for key, p in (("herald1_clicks", p1), ("herald2_clicks", p2)):
            expected = n * p
            stats.append(_compare(key, sim.truth_counts[key], expected, math.sqrt(expected), threshold))

    expected_d3 = n * report.d3_click_prob
    stats.append(_compare(f"singles_{d3.label}", len(d3), expected_d3, math.sqrt(expected_d3), threshold))

    background = n * _background_pixel_prob(histogram, significance, report)
    pixels = max(significance.n_pixels, 1)
    stats.append(
        _compare(
            "background_mean",
            significance.background_mean,
            background,
            math.sqrt(background / pixels),
            threshold,
        )
    )
    peak = n * report.peak_pixel_prob
    stats.append(_compare("peak_pixel", histogram.count_at(0, 0), peak, math.sqrt(peak), threshold))
    triples = n * report.true_triple_prob
    stats.append(
        _compare("true_triples", sim.truth_counts["true_triples"], triples, math.sqrt(triples), threshold)
    )

    comparison = ComparisonReport(statistics=stats, threshold=threshold)
    for s in comparison.flagged:
        logger.warning(f"{s.name}: simulated {s.observed:.6g} vs expected {s.expected:.6g} (z={s.z:.2f})")
    return comparison


def _with(config: ExperimentConfig, filter_transmission: float, eta_system: float) -> ExperimentConfig:
    return config.model_copy(
        update={
            "source1": config.source1.model_copy(update={"herald_filter_transmission": filter_transmission}),
            "source2": config.source2.model_copy(update={"herald_filter_transmission": filter_transmission}),
            "phasematch": config.phasematch.model_copy(update={"eta_system": eta_system}),
        }
    )


def calibrate_transmissions(
    config: ExperimentConfig, peak_per_hour: float, noise_per_hour: float
) -> ExperimentConfig:
    """Fit the shared herald filter transmission to the noise and the effective eta_system to the signal.

    The noise depends on the herald twofold rate only, so the filter transmission is
    solved first; the signal is linear in eta_system, which is then solved in closed form.
    """
    if not 0 < noise_per_hour < peak_per_hour:
        raise CalibrationError(f"rates: need 0 < noise ({noise_per_hour}) < peak ({peak_per_hour})")
    eta = config.phasematch.eta_system

    def noise_residual(filter_transmission: float) -> float:
        noise = predict_rates(_with(config, filter_transmission, eta)).noise_per_hour_per_pixel
        return noise - noise_per_hour

    lo, hi = CALIBRATION_BOUNDS
    if noise_residual(lo) > 0 or noise_residual(hi) < 0:
        raise CalibrationError(
            f"rates: no herald filter transmission in [{lo}, {hi}] gives {noise_per_hour} noise per hour"
        )
    filter_transmission = brentq(noise_residual, lo, hi, xtol=1e-12)

    signal = predict_rates(_with(config, filter_transmission, eta)).signal_per_hour
    target = peak_per_hour - noise_per_hour
    eta_effective = eta * target / signal if signal > 0 else math.inf
    if not 0 < eta_effective <= 1:
        raise CalibrationError(f"rates: effective eta_system {eta_effective:.3g} is not a probability")
    logger.info(
        f"Calibrated herald_filter_transmission={filter_transmission:.6g}, eta_system={eta_effective:.6g}"
    )
    return _with(config, filter_transmission, eta_effective)
