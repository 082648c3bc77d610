"""Nearly convex domains with many critical points.

Modules
-------
harmonic_profile
    Even harmonic polynomials ``Re F(x1 + i x2)`` and their axis critical points.
torsion_domain
    The perturbed cylinder field ``u_eps``, its star-shaped positivity domain and critical points.
star_geometry
    Star-kernel regions, star checks and measure ratios of the kernel defect.
manifold_charts
    Exponential charts on space forms, rescaled metrics and chart transitions.
elliptic_solver
    Finite-difference Newton solver for semilinear problems on the charted domain.
cli
    The ``starcrit`` command line tool.
"""

from .errors import (
    DomainError,
    HypothesisError,
    NonConvergenceError,
    ResolutionError,
    StarcritError,
    StructuralError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "HypothesisError",
    "NonConvergenceError",
    "ResolutionError",
    "StarcritError",
    "StructuralError",
    "ValidationError",
    "__version__",
]
