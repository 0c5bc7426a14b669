"""System-level simulator of multihop IAB mmWave cellular networks.

Two anchoring architectures are selectable: a flat-IP mode in which relay
nodes may anchor through any gNB, and a Release-16 style mode in which
relays must anchor through designated IAB-donors.
"""

__version__ = "0.1.0"

from .config import ArchMode, ConfigError, ScenarioConfig, load_config
from ._jit import backend_name

__all__ = ["ArchMode", "ConfigError", "ScenarioConfig", "load_config",
           "backend_name", "__version__"]
