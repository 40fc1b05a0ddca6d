"""Classical, quantum and Bohmian dynamics of a particle in a square box."""
from .errors import DomainError, NodeProximityError, TruncationError
from .geometry import BilliardConfig

__version__ = "0.1.0"

__all__ = ["BilliardConfig", "DomainError", "NodeProximityError", "TruncationError", "__version__"]
