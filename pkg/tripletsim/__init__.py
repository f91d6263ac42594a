__version__ = "0.1.0"

from . import params
from .config import builtin_config, load_config
from .tripletsim import TripletSim

__all__ = ["TripletSim", "builtin_config", "load_config", "params"]
