from __future__ import annotations

import math
from typing import Any, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from tripletsim.types import Float64Array, Int64Array

from .config import ExperimentConfig


class TimeTagStream(BaseModel):
    label: str
    channel: int = Field(..., ge=0, lt=2**16)
    timestamps_ps: Int64Array
    duration_ps: int = Field(..., ge=0)

    def __len__(self) -> int:
        return int(self.timestamps_ps.size)

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.timestamps_ps) > 0))

    def in_range(self) -> bool:
        t = self.timestamps_ps
        return t.size == 0 or (int(t[0]) >= 0 and int(t[-1]) < self.duration_ps)

    def shifted(self, offset_ps: int) -> TimeTagStream:
        return self.model_copy(
            update={
                "timestamps_ps": self.timestamps_ps + offset_ps,
                "duration_ps": self.duration_ps + offset_ps,
            }
        )

    def rate_hz(self) -> float:
        return len(self) / (self.duration_ps * 1e-12) if self.duration_ps else 0.0


class SimulationResult(BaseModel):
    streams: list[TimeTagStream] = Field(..., min_length=3, max_length=3)
    # ground-truth tallies, e.g. true_triples, d3_dark_clicks, herald1_clicks
    truth_counts: dict[str, int]
    seed: int
    mode: Literal["full", "conditioned"]
    slots: int
    duration_s: float
    config_fingerprint: str
    # slot reach of herald sampling around each D3 click (conditioned mode only)
    window_slots: int | None = None


class CoincHistogram2D(BaseModel):
    bin_width_ps: float = Field(..., gt=0)
    tau31_offsets: Int64Array
    tau32_offsets: Int64Array
    counts: Int64Array
    duration_s: float = Field(..., ge=0)

    @model_validator(mode="after")
    def _shape(self) -> CoincHistogram2D:
        expected = (self.tau31_offsets.size, self.tau32_offsets.size)
        if self.counts.shape != expected:
            raise ValueError(f"counts shape {self.counts.shape} does not match offsets {expected}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_pixels(self) -> int:
        return int(self.counts.size)

    def count_at(self, tau31_bin: int, tau32_bin: int) -> int:
        i = int(np.searchsorted(self.tau31_offsets, tau31_bin))
        j = int(np.searchsorted(self.tau32_offsets, tau32_bin))
        return int(self.counts[i, j])

    def merge(self, other: CoincHistogram2D) -> CoincHistogram2D:
        if (
            self.bin_width_ps != other.bin_width_ps
            or not np.array_equal(self.tau31_offsets, other.tau31_offsets)
            or not np.array_equal(self.tau32_offsets, other.tau32_offsets)
        ):
            raise ValueError("histograms with different binning cannot be merged")
        return self.model_copy(
            update={"counts": self.counts + other.counts, "duration_s": self.duration_s + other.duration_s}
        )

    def to_frame(self) -> pd.DataFrame:
        tau31, tau32 = np.meshgrid(self.tau31_offsets, self.tau32_offsets, indexing="ij")
        return pd.DataFrame(
            {"tau31_bin": tau31.ravel(), "tau32_bin": tau32.ravel(), "count": self.counts.ravel()}
        )


class CoincHistogram1D(BaseModel):
    bin_width_ps: float = Field(..., gt=0)
    offsets: Int64Array
    counts: Int64Array
    duration_s: float = Field(..., ge=0)

    def count_at(self, offset: int) -> int:
        return int(self.counts[int(np.searchsorted(self.offsets, offset))])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"tau_bin": self.offsets, "count": self.counts})


class BackgroundEstimate(BaseModel):
    mean: float
    # variance/mean, None when the mean is zero
    dispersion: float | None
    n_pixels: int


class Significance(BaseModel):
    peak_count: int
    background_mean: float
    z_sigma: float
    infinite: bool = False


class SignificanceReport(BaseModel):
    peak_coords: tuple[int, int]
    peak_count: int
    background_mean: float
    dispersion: float | None
    z_sigma: float
    z_infinite: bool
    tail_log10_prob: float
    n_pixels: int
    histogram_total: int
    exclusion_radius: int = 0


class G2Estimate(BaseModel):
    value: float | None
    undefined: bool
    n_herald: int
    n_herald_a: int
    n_herald_b: int
    n_herald_ab: int

    @property
    def std_error(self) -> float | None:
        if self.value is None or self.n_herald_ab == 0:
            return None
        return self.value / math.sqrt(self.n_herald_ab)


class RateReport(BaseModel):
    signal_per_hour: float = Field(..., ge=0)
    noise_per_hour_per_pixel: float = Field(..., ge=0)
    peak_per_hour: float = Field(..., ge=0)
    observed_reference: tuple[float, float] = (0.31, 0.13)
    predicted_reference: tuple[float, float] = (0.40, 0.20)
    singles_hz: dict[str, float]
    herald_twofold_hz: float = Field(..., ge=0)
    # exact per-slot quantities used for Monte Carlo comparison
    slot_rate_hz: float
    herald_click_prob: tuple[float, float]
    d3_click_prob: float
    d3_herald_prob: tuple[float, float]
    peak_pixel_prob: float
    true_triple_prob: float
    config_fingerprint: str

    def predicted_pair(self) -> tuple[float, float]:
        return self.peak_per_hour, self.noise_per_hour_per_pixel

    def expected_peak_counts(self, hours: float) -> float:
        return self.peak_per_hour * hours

    def expected_signal_counts(self, hours: float) -> float:
        return self.signal_per_hour * hours

    def expected_background_mean(self, hours: float) -> float:
        return self.noise_per_hour_per_pixel * hours


class StatisticComparison(BaseModel):
    name: str
    observed: float
    expected: float
    sigma: float
    z: float
    flagged: bool


class ComparisonReport(BaseModel):
    statistics: list[StatisticComparison]
    threshold: float = 5.0

    @property
    def flagged(self) -> list[StatisticComparison]:
        return [s for s in self.statistics if s.flagged]

    def get(self, name: str) -> StatisticComparison:
        return next(s for s in self.statistics if s.name == name)


class DelayScanPoint(BaseModel):
    delay_ps: float
    twofold_rate_hz: float
    coincidences: int
    herald_label: str
    dwell_s: float


class DelayScanFit(BaseModel):
    center_ps: float
    fwhm_ps: float
    amplitude_hz: float
    floor_hz: float


class PhasematchMap(BaseModel):
    lambda1_nm: Float64Array
    lambda2_nm: Float64Array
    sfg: Float64Array
    shg1: Float64Array
    shg2: Float64Array

    @property
    def total(self) -> np.ndarray:
        return self.sfg + self.shg1 + self.shg2

    def peak_ratio(self) -> float:
        """SFG ridge maximum over the larger SHG ridge maximum."""
        return float(self.sfg.max() / max(self.shg1.max(), self.shg2.max()))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.total, index=self.lambda1_nm, columns=self.lambda2_nm)
        frame.index.name = "lambda1_nm"
        return frame


class Provenance(BaseModel):
    seed: int | None
    version: str
    created_at: str
    config_fingerprint: str | None


class RunReport(BaseModel):
    command: str
    config: ExperimentConfig | None = None
    rates: RateReport | None = None
    significance: SignificanceReport | None = None
    comparison: ComparisonReport | None = None
    delay_scan: list[DelayScanPoint] | None = None
    delay_fit: DelayScanFit | None = None
    extra: dict[str, Any] = Field(default_factory=dict)
    provenance: Provenance
