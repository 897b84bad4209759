"""Local hidden-state and local hidden-variable models for two-qubit states.

Finite measurement polytopes, noise maps and deterministic strategies are
combined into semidefinite programs whose solutions are validated
independently and, for LHV models, turned into exact rational certificates.
"""

__version__ = "0.1.0"

from .qforms import (  # noqa: E402
    BELL,
    FamilyPoint,
    FamilyState,
    QubitOperator,
    TwoQubitOperator,
    build_family,
    werner,
)
from .measpoly import MeasurementSet, NoiseMap, icosahedron, octahedron, shrinking_factor  # noqa: E402

__all__ = [
    "BELL", "FamilyPoint", "FamilyState", "QubitOperator", "TwoQubitOperator", "build_family",
    "werner", "MeasurementSet", "NoiseMap", "icosahedron", "octahedron", "shrinking_factor",
]
