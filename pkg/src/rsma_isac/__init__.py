"""Energy-efficient rate-splitting ISAC precoding for LEO satellites with low-resolution DACs."""

from .config import ConfigError, RadarSicMode, SystemConfig

__version__ = "0.1.0"

__all__ = ["ConfigError", "RadarSicMode", "SystemConfig", "__version__"]
