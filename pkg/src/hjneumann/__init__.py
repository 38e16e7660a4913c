"""Numerical weak KAM toolkit for convex Hamilton-Jacobi equations
u_t + H(x, Du) = 0 with oblique Neumann conditions D_gamma u = g on intervals
and axis-aligned rectangles: critical values, Mane distances, Aubry sets,
asymptotic solution formulas, and reflected trajectories."""

from .errors import (
    CflViolation,
    ConfigError,
    CornerPoint,
    EmptyAubrySet,
    EmptyCriticalSet,
    HJNError,
    InfiniteAction,
    InsufficientHorizon,
    MissingSnapshot,
    NonConvergence,
    NotOnBoundary,
    ObliquenessViolated,
    StepTooLarge,
)
from .geometry import BoundaryData, Interval, Location, Rectangle

__version__ = "0.1.0"
