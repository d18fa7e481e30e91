"""CrowdCafe-style microtask crowdsourcing platform."""

from .engine import Platform
from .routing import ReservationPolicy
from .storage import Store

__version__ = "0.1.0"

__all__ = ["Platform", "ReservationPolicy", "Store", "__version__"]
