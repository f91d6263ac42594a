import numpy as np
import pytest

from tripletsim.detectors import click_probability, dark_click_probability, sample_click
from tripletsim.errors import DomainError
from tripletsim.models.detectors import FreeRunningDetector, GatedDetector

PERIOD_NS = 1e3 / 430


def test_free_running_dark_probability_per_bin() -> None:
    det = FreeRunningDetector(label="D3", channel=3)
    assert dark_click_probability(det, PERIOD_NS) == pytest.approx(3.5 * PERIOD_NS * 1e-9, rel=1e-6)


def test_gated_dark_probability_is_capped_by_the_gate() -> None:
    det = GatedDetector(label="D1", channel=1, dark_prob_per_ns=1e-3, gate_length_ns=18.0)
    assert dark_click_probability(det, 100.0) == dark_click_probability(det, 18.0)
    assert dark_click_probability(det, 1.0) == pytest.approx(1e-3, rel=1e-3)


def test_no_darks_no_photons_never_clicks() -> None:
    det = FreeRunningDetector(label="D3", channel=3, dark_rate_hz=0.0)
    assert click_probability(0, det, PERIOD_NS) == 0.0


def test_click_probability_combines_photons_and_darks() -> None:
    det = GatedDetector(label="D1", channel=1)
    dark = dark_click_probability(det, PERIOD_NS)
    assert click_probability(0, det, PERIOD_NS) == pytest.approx(dark)
    assert click_probability(2, det, PERIOD_NS) == pytest.approx(1 - 0.4**2 * (1 - dark))
    assert click_probability(200, det, PERIOD_NS) == pytest.approx(1.0)


def test_window_longer_than_gate_is_rejected() -> None:
    det = GatedDetector(label="D1", channel=1, gate_length_ns=2.0)
    with pytest.raises(DomainError):
        click_probability(1, det, PERIOD_NS)


def test_negative_inputs_are_rejected() -> None:
    det = FreeRunningDetector(label="D3", channel=3)
    with pytest.raises(DomainError):
        click_probability(-1, det, PERIOD_NS)
    with pytest.raises(DomainError):
        dark_click_probability(det, -1.0)


def test_sample_click_frequency() -> None:
    det = GatedDetector(label="D1", channel=1, efficiency=0.6)
    rng = np.random.default_rng(7)
    n = 200_000
    clicks = sample_click(rng, 1, det, PERIOD_NS, size=n)
    p = click_probability(1, det, PERIOD_NS)
    assert abs(clicks.sum() - n * p) < 5 * np.sqrt(n * p * (1 - p))
