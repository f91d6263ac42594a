from .models.config import AnalysisParams, ClockParams, DelayScanParams, ExperimentConfig
from .models.detectors import FreeRunningDetector, GatedDetector
from .models.optics import PhasematchParams, SpectralPoint
from .models.sources import SourceParams

__all__ = [
    "AnalysisParams",
    "ClockParams",
    "DelayScanParams",
    "ExperimentConfig",
    "FreeRunningDetector",
    "GatedDetector",
    "PhasematchParams",
    "SourceParams",
    "SpectralPoint",
]
