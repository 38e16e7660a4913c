"""Domains and oblique boundary data.

Supported domains are the 1D interval (a, b) and the 2D axis-aligned rectangle
(ax, bx) x (ay, by).  Boundary data assigns to each face a constant oblique
direction gamma with nu . gamma > 0 and a running cost g; gamma and g are kept
face-wise (gamma constant per face, g a function of position on the face).
Rectangle corners carry no normal and are excluded from boundary operations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CornerPoint, NotOnBoundary

__all__ = [
    "Location",
    "Face",
    "Interval",
    "Rectangle",
    "BoundaryData",
    "ObliquenessReport",
    "classify",
    "outward_normal",
    "check_obliqueness",
]


class Location(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class Face:
    """One flat piece of the boundary: x[axis] == value, outward sign `side`."""

    name: str
    axis: int
    side: int  # -1 for the low face, +1 for the high face
    value: float

    def normal(self, dim: int) -> np.ndarray:
        nu = np.zeros(dim)
        nu[self.axis] = float(self.side)
        return nu


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("interval needs a < b")

    @property
    def dim(self) -> int:
        return 1

    def bounds(self):
        return [(self.a, self.b)]

    def faces(self):
        return (
            Face("left", 0, -1, self.a),
            Face("right", 0, +1, self.b),
        )

    def diameter(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class Rectangle:
    ax: float
    bx: float
    ay: float
    by: float

    def __post_init__(self):
        if not (self.ax < self.bx and self.ay < self.by):
            raise ValueError("rectangle needs ax < bx and ay < by")

    @property
    def dim(self) -> int:
        return 2

    def bounds(self):
        return [(self.ax, self.bx), (self.ay, self.by)]

    def faces(self):
        return (
            Face("left", 0, -1, self.ax),
            Face("right", 0, +1, self.bx),
            Face("bottom", 1, -1, self.ay),
            Face("top", 1, +1, self.by),
        )

    def diameter(self) -> float:
        return float(np.hypot(self.bx - self.ax, self.by - self.ay))


Domain = Interval | Rectangle


def _as_point(domain: Domain, x) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.shape != (domain.dim,):
        raise ValueError(f"point shape {pt.shape} does not match dim {domain.dim}")
    return pt


def _face_hits(domain: Domain, pt: np.ndarray, tol: float):
    """Faces whose plane lies within tol of pt, given pt is inside the slab."""
    hits = []
    for f in domain.faces():
        if abs(pt[f.axis] - f.value) <= tol:
            hits.append(f)
    return hits


def classify(domain: Domain, x, tol: float) -> Location:
    """Interior / boundary / outside with a symmetric band of width tol."""
    pt = _as_point(domain, x)
    for (lo, hi), xi in zip(domain.bounds(), pt):
        if xi < lo - tol or xi > hi + tol:
            return Location.OUTSIDE
    if _face_hits(domain, pt, tol):
        return Location.BOUNDARY
    return Location.INTERIOR


def outward_normal(domain: Domain, x, tol: float) -> np.ndarray:
    """Unit outward normal at a boundary point.

    Raises NotOnBoundary off the boundary band and CornerPoint where two
    faces meet (normals are face-wise; corners have none).
    """
    pt = _as_point(domain, x)
    if classify(domain, pt, tol) is not Location.BOUNDARY:
        raise NotOnBoundary(f"{pt} is not on the boundary (tol={tol})")
    hits = _face_hits(domain, pt, tol)
    if len(hits) > 1:
        raise CornerPoint(f"{pt} lies at a corner of the rectangle")
    return hits[0].normal(domain.dim)


def boundary_face(domain: Domain, x, tol: float) -> Face:
    """The unique face containing x; same error contract as outward_normal."""
    pt = _as_point(domain, x)
    if classify(domain, pt, tol) is not Location.BOUNDARY:
        raise NotOnBoundary(f"{pt} is not on the boundary (tol={tol})")
    hits = _face_hits(domain, pt, tol)
    if len(hits) > 1:
        raise CornerPoint(f"{pt} lies at a corner of the rectangle")
    return hits[0]


def _zero_g(x) -> float:
    return 0.0


@dataclass(frozen=True)
class BoundaryData:
    """Face-wise oblique directions and running costs.

    gamma maps face name -> constant direction (length-dim array); g maps face
    name -> callable of position on that face.  Immutable; construct a new one
    to change anything.
    """

    gamma: dict  # face name -> np.ndarray, constant per face
    g: dict = field(default_factory=dict)  # face name -> Callable[[np.ndarray], float]

    @staticmethod
    def normal_field(domain: Domain, g: Callable | float = 0.0) -> "BoundaryData":
        """gamma = nu on every face, g constant or callable shared by faces."""
        if not callable(g):
            gval = float(g)

            def g_fn(x, _v=gval):
                return _v

        else:
            g_fn = g
        gammas = {f.name: f.normal(domain.dim) for f in domain.faces()}
        return BoundaryData(gamma=gammas, g={f.name: g_fn for f in domain.faces()})

    def gamma_at(self, face: Face) -> np.ndarray:
        return np.asarray(self.gamma[face.name], dtype=float)

    def g_at(self, face: Face, x) -> float:
        fn = self.g.get(face.name, _zero_g)
        return float(fn(np.atleast_1d(np.asarray(x, dtype=float))))


@dataclass(frozen=True)
class ObliquenessReport:
    min_inner_product: float
    worst_face: str
    n_samples: int

    @property
    def ok(self) -> bool:
        return self.min_inner_product > 0.0


def _face_samples(domain: Domain, face: Face, n: int):
    if domain.dim == 1:
        return [np.array([face.value])]
    # walk along the face, corners excluded
    (lo0, hi0), (lo1, hi1) = domain.bounds()
    t_axis = 1 - face.axis
    lo, hi = (lo0, hi0) if t_axis == 0 else (lo1, hi1)
    ts = np.linspace(lo, hi, n + 2)[1:-1]
    pts = []
    for t in ts:
        pt = np.empty(2)
        pt[face.axis] = face.value
        pt[t_axis] = t
        pts.append(pt)
    return pts


def check_obliqueness(domain: Domain, bdata: BoundaryData, n_per_face: int = 16) -> ObliquenessReport:
    """Minimum of nu . gamma over sampled boundary points (corners excluded).

    Positive minimum is the standing obliqueness assumption; callers decide
    whether to raise on failure.
    """
    worst = np.inf
    worst_face = ""
    count = 0
    for face in domain.faces():
        nu = face.normal(domain.dim)
        for pt in _face_samples(domain, face, n_per_face):
            ip = float(nu @ bdata.gamma_at(face))
            count += 1
            if ip < worst:
                worst = ip
                worst_face = face.name
    return ObliquenessReport(min_inner_product=worst, worst_face=worst_face, n_samples=count)
