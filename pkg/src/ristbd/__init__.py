"""RIS-aided sensing/communication base-station simulator with multi-frame
track-before-detect."""

from .config import ScenarioConfig, load_config

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "load_config", "__version__"]
