from __future__ import annotations

import hashlib
from fractions import Fraction
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .detectors import DetectorParams, FreeRunningDetector, GatedDetector
from .optics import PhasematchParams
from .sources import SourceParams

PS_PER_S = 10**12


class ClockParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    repetition_rate_hz: float = Field(4.30e8, gt=0)
    pulse_fwhm_ps: float = Field(10.0, gt=0)
    pulse_period_ps: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _consistent_period(self) -> ClockParams:
        exact = PS_PER_S / self.repetition_rate_hz
        if self.pulse_period_ps is None:
            self.pulse_period_ps = exact
        elif abs(self.pulse_period_ps - exact) > 1e-9 * exact:
            raise ValueError(
                f"pulse_period_ps={self.pulse_period_ps} disagrees with the repetition rate ({exact} ps)"
            )
        return self

    @property
    def period_ps(self) -> float:
        return PS_PER_S / self.repetition_rate_hz

    @property
    def period_fraction(self) -> Fraction:
        """Pulse period in picoseconds as an exact rational."""
        rate = Fraction(self.repetition_rate_hz).limit_denominator(10**6)
        return Fraction(PS_PER_S) / rate

    @property
    def period_ns(self) -> float:
        return self.period_ps / 1e3

    def slots(self, duration_s: float) -> int:
        return int(round(duration_s * self.repetition_rate_hz))


class AnalysisParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # None: one repetition period, filled in by ExperimentConfig
    bin_width_ps: float | None = Field(None, gt=0)
    half_window_bins: int = Field(20, ge=0)
    peak_exclusion_radius: int = Field(0, ge=0)


class DelayScanParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seeded_source: Literal[1, 2] = 2
    seed_mean_photons: float = Field(1e5, gt=0)
    dwell_s: float = Field(1.0, gt=0)


def _default_detectors() -> list[DetectorParams]:
    return [
        GatedDetector(label="D1", channel=1),
        GatedDetector(label="D2", channel=2),
        FreeRunningDetector(label="D3", channel=3),
    ]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    clock: ClockParams = Field(default_factory=ClockParams)
    source1: SourceParams = Field(
        default_factory=lambda: SourceParams(
            g2_measured=0.030, herald_wavelength_nm=807.0, signal_wavelength_nm=1560.0
        )
    )
    source2: SourceParams = Field(
        default_factory=lambda: SourceParams(
            g2_measured=0.036, herald_wavelength_nm=810.0, signal_wavelength_nm=1551.0
        )
    )
    phasematch: PhasematchParams = Field(default_factory=PhasematchParams)
    # D1 heralds source 1, D2 heralds source 2, D3 watches the upconverted light
    detectors: list[DetectorParams] = Field(default_factory=_default_detectors, min_length=3, max_length=3)
    residual_delay_ps: float = 0.0
    analysis: AnalysisParams = Field(default_factory=AnalysisParams)
    delay_scan: DelayScanParams = Field(default_factory=DelayScanParams)
    duration_s: float = Field(60.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    mode: Literal["full", "conditioned"] = "conditioned"
    memory_cap_tags: int = Field(10**8, gt=0)

    @model_validator(mode="after")
    def _cross_field(self) -> ExperimentConfig:
        labels = [d.label for d in self.detectors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"detector labels must be unique, got {labels}")
        channels = [d.channel for d in self.detectors]
        if len(set(channels)) != len(channels):
            raise ValueError(f"detector channels must be unique, got {channels}")
        if self.analysis.bin_width_ps is None:
            self.analysis.bin_width_ps = self.clock.period_ps
        return self

    @property
    def d1(self) -> DetectorParams:
        return self.detectors[0]

    @property
    def d2(self) -> DetectorParams:
        return self.detectors[1]

    @property
    def d3(self) -> DetectorParams:
        return self.detectors[2]

    @property
    def bin_width_ps(self) -> float:
        assert self.analysis.bin_width_ps is not None
        return self.analysis.bin_width_ps

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring run-only fields."""
        canonical = self.model_dump_json(exclude={"duration_s", "seed", "mode", "memory_cap_tags"})
        return hashlib.sha256(canonical.encode()).hexdigest()
