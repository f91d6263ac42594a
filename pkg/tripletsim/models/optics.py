from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator


class PhasematchParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda1_center_nm: float = Field(1560.0, gt=0)
    lambda2_center_nm: float = Field(1551.0, gt=0)
    acceptance_fwhm_nm: float = Field(0.27, gt=0)
    # end-to-end probability that an aligned input pair leaves the pigtailed waveguide as one SFG photon
    eta_system: float = Field(1.56e-8, gt=0, le=1)
    pigtail_coupling: float = Field(0.70, gt=0, le=1)
    crystal_length_cm: float = Field(4.5, gt=0)

    @model_validator(mode="after")
    def _non_degenerate(self) -> PhasematchParams:
        if self.lambda1_center_nm == self.lambda2_center_nm:
            raise ValueError("lambda1_center_nm and lambda2_center_nm must differ (non-degenerate inputs)")
        return self


class SpectralPoint(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda1_nm: float = Field(..., gt=0)
    lambda2_nm: float = Field(..., gt=0)
    power1_mw: float = Field(0.0, ge=0)
    power2_mw: float = Field(0.0, ge=0)
