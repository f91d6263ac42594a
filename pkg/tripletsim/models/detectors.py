from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field


class Detector(BaseModel):
    model_config = ConfigDict(extra="forbid")

    label: str = Field(..., min_length=1)
    channel: int = Field(..., ge=0, lt=2**16)
    efficiency: float = Field(0.60, ge=0, le=1)

    def __repr_args__(self):
        return [(key, value) for key, value in self.__dict__.items() if key != "mode"]


class FreeRunningDetector(Detector):
    mode: Literal["free_running"] = "free_running"
    dark_rate_hz: float = Field(3.5, ge=0)


class GatedDetector(Detector):
    mode: Literal["gated"] = "gated"
    dark_prob_per_ns: float = Field(1e-6, ge=0, le=1)
    gate_length_ns: float = Field(18.0, gt=0)


DetectorParams = Annotated[FreeRunningDetector | GatedDetector, Field(discriminator="mode")]
