"""Maxwell fields on the exterior of a Schwarzschild black hole: evolution and multiplier estimates."""
from .geometry import BlackHoleParams, DomainError, SpacetimePoint, DoubleNullPoint, KruskalPoint
from .numerics import AngularGrid, Grids, RadialGrid

__all__ = [
    "AngularGrid",
    "BlackHoleParams",
    "DomainError",
    "DoubleNullPoint",
    "Grids",
    "KruskalPoint",
    "RadialGrid",
    "SpacetimePoint",
]

__version__ = "0.1.0"
