from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from tripletsim.types import Float64Array

logger = logging.getLogger(__name__)


class SourceParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # mean pairs per pulse; None means "derive from g2_measured" when the config is resolved
    mu: float | None = Field(None, ge=0)
    statistics: Literal["thermal", "poisson", "deterministic"] = "thermal"
    modes: int = Field(1, ge=1)
    herald_coupling: float = Field(0.5, ge=0, le=1)
    herald_filter_transmission: float = Field(1.0, ge=0, le=1)
    signal_coupling: float = Field(0.5, ge=0, le=1)
    signal_path_transmission: float = Field(1.0, ge=0, le=1)
    herald_wavelength_nm: float = Field(807.0, gt=0)
    signal_wavelength_nm: float = Field(1560.0, gt=0)
    g2_measured: float | None = Field(None, ge=0, lt=1)

    @model_validator(mode="after")
    def _check_mu(self) -> SourceParams:
        if self.mu is None and self.g2_measured is None:
            raise ValueError("either mu or g2_measured must be given")
        if self.mu is not None:
            if self.statistics == "deterministic" and self.mu != round(self.mu):
                raise ValueError("deterministic emission needs an integer mu")
            if self.mu > 0.1 and self.statistics != "deterministic":
                logger.warning(f"mu={self.mu} is not small; multi-pair emission will dominate the noise")
        return self

    @property
    def herald_transmission(self) -> float:
        """Probability that a herald photon reaches its detector (coupling and grating filter)."""
        return self.herald_coupling * self.herald_filter_transmission

    @property
    def signal_transmission(self) -> float:
        """Probability that a telecom photon reaches the waveguide pigtail."""
        return self.signal_coupling * self.signal_path_transmission


class PairDistribution(BaseModel):
    probabilities: Float64Array

    @model_validator(mode="after")
    def _normalised(self) -> PairDistribution:
        p = self.probabilities
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a non-empty 1D array")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        return self

    @property
    def n_max(self) -> int:
        return self.probabilities.size - 1

    def mean(self) -> float:
        return float(np.arange(self.probabilities.size) @ self.probabilities)
