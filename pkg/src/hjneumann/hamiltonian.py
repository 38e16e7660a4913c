"""Hamiltonian families, numerical Legendre transforms, and hypothesis checks.

Three convex coercive families on R^d (d = 1, 2):

    eikonal                 H(x, p) = |p|            - f(x)
    quadratic               H(x, p) = |p|^2 / 2      - f(x)
    quadratic_anisotropic   H(x, p) = p . A p / 2    - f(x),  A constant SPD

plus a scalar offset so that H - c stays in the family (the offset is folded
into the potential).  The Lagrangian is the Legendre-Fenchel conjugate
L(x, xi) = sup_p (xi . p - H(x, p)), evaluated numerically on a radial grid
with the closed form kept alongside as an independent cross-check.

The critical set at level c is Q = {(x, p) : H(x, p) = c}; S-points are the
members of Q where the momentum gradient exists, paired with xi = D_p H(x, p).
check_convexity_modulus estimates a one-sided lower modulus for the convexity
gap H(x, p + p') - H(x, p) - xi . p' binned by r = (xi . p')_+/-;
check_scaling_bound measures the empirical constant in the one-sided scaling
inequality L(x, (1 +/- delta) xi) <= (1 +/- delta) L(x, xi) + delta omega_1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import EmptyCriticalSet
from .geometry import Interval, Rectangle

__all__ = [
    "Hamiltonian",
    "Lagrangian",
    "CriticalPoint",
    "CriticalSample",
    "ModulusEstimate",
    "ScalingTrendReport",
    "eikonal",
    "quadratic",
    "quadratic_anisotropic",
    "supergradient",
    "critical_points",
    "fenchel_gap",
    "conjugate_momentum",
    "check_convexity_modulus",
    "check_scaling_bound",
    "convexity_report",
    "coercivity_report",
]

FAMILIES = ("eikonal", "quadratic", "quadratic_anisotropic")


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """One member of the built-in families; immutable.

    potential is f(x), vectorized over leading axes of x with shape (..., dim).
    offset is added to f, so normalized(c) keeps the family closed under H - c.
    p_bound is the box radius on which monotone fluxes and samplers operate;
    it must dominate every momentum the run actually attains.
    """

    family: str
    potential: Callable
    dim: int
    p_bound: float
    matrix: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "quadratic_anisotropic":
            a = np.asarray(self.matrix, dtype=float)
            if a.shape != (self.dim, self.dim):
                raise ValueError("matrix shape must be (dim, dim)")
            if not np.allclose(a, a.T):
                raise ValueError("matrix must be symmetric")
            if np.linalg.eigvalsh(a)[0] <= 0:
                raise ValueError("matrix must be positive definite")
            object.__setattr__(self, "matrix", a)

    def f_eff(self, x):
        """Effective potential f(x) + offset; x has shape (..., dim)."""
        return np.asarray(self.potential(np.asarray(x, dtype=float)), dtype=float) + self.offset

    def kinetic(self, p):
        p = np.asarray(p, dtype=float)
        if self.family == "eikonal":
            return np.linalg.norm(p, axis=-1)
        if self.family == "quadratic":
            return 0.5 * np.sum(p * p, axis=-1)
        return 0.5 * np.einsum("...i,ij,...j->...", p, self.matrix, p)

    def eval(self, x, p):
        """H(x, p), broadcast over leading axes."""
        return self.kinetic(p) - self.f_eff(x)

    def grad_kinetic(self, p):
        """D_p of the kinetic part where it exists; eikonal kink p=0 gives nan."""
        p = np.asarray(p, dtype=float)
        if self.family == "eikonal":
            norm = np.linalg.norm(p, axis=-1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                return p / norm
        if self.family == "quadratic":
            return p.copy()
        return np.einsum("ij,...j->...i", self.matrix, p)

    def normalized(self, c: float) -> "Hamiltonian":
        """The shifted member H - c of the same family."""
        return replace(self, offset=self.offset + c)

    def alphas(self) -> np.ndarray:
        """Per-axis max of |dH/dp_i| over the box |p|_inf <= p_bound (closed form)."""
        b = self.p_bound
        if self.family == "eikonal":
            return np.ones(self.dim)
        if self.family == "quadratic":
            return np.full(self.dim, b)
        return np.abs(self.matrix).sum(axis=1) * b

    def alphas_sampled(self, n: int = 33, eps: float = 1e-6) -> np.ndarray:
        """Independent estimate of alphas via central differences on eval."""
        axes = [np.linspace(-self.p_bound, self.p_bound, n)] * self.dim
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        out = np.zeros(self.dim)
        for i in range(self.dim):
            dp = np.zeros(self.dim)
            dp[i] = eps
            d = (self.kinetic(pts + dp) - self.kinetic(pts - dp)) / (2 * eps)
            out[i] = np.max(np.abs(d))
        return out

    def slope_bound(self, f_eff_max: float) -> float:
        """Max |Dp| over subsolution momenta: solves kinetic(p) = max f_eff."""
        m = max(float(f_eff_max), 0.0)
        if self.family == "eikonal":
            return m
        if self.family == "quadratic":
            return float(np.sqrt(2.0 * m))
        lam_min = float(np.linalg.eigvalsh(self.matrix)[0])
        return float(np.sqrt(2.0 * m / lam_min))


def eikonal(potential, dim=1, p_bound=8.0, offset=0.0) -> Hamiltonian:
    return Hamiltonian("eikonal", potential, dim, p_bound, offset=offset)


def quadratic(potential, dim=1, p_bound=2.5, offset=0.0) -> Hamiltonian:
    return Hamiltonian("quadratic", potential, dim, p_bound, offset=offset)


def quadratic_anisotropic(potential, matrix, dim=2, p_bound=2.5, offset=0.0) -> Hamiltonian:
    return Hamiltonian("quadratic_anisotropic", potential, dim, p_bound, matrix=np.asarray(matrix, float), offset=offset)


def supergradient(ham: Hamiltonian, p, kink_tol: float = 1e-12) -> list[np.ndarray]:
    """D_p H(x, p) as a (possibly empty) list; empty exactly at the eikonal kink."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if ham.family == "eikonal" and np.linalg.norm(p) <= kink_tol:
        return []
    return [np.atleast_1d(ham.grad_kinetic(p))]


# ---------------------------------------------------------------------------
# Legendre transform


@dataclass(frozen=True, eq=False)
class Lagrangian:
    """Numerical conjugate of a Hamiltonian on the radial grid [0, p_radius].

    eval() is the grid supremum (the operative route); closed_form() is the
    exact conjugate kept for cross-checks.  When the grid argmax sits on the
    outer radius the transform cannot certify finiteness and value_cap is
    returned (the eikonal conjugate outside the unit ball).  Grid resolution
    sets the accuracy: the sup of a concave function sampled at spacing dr is
    exact to dr^2/8 times the curvature, so the default grid holds 1e-6.
    """

    ham: Hamiltonian
    p_radius: float = 3.0
    n_grid: int = 4097
    value_cap: float = 1e9

    @cached_property
    def _rgrid(self) -> np.ndarray:
        return np.linspace(0.0, self.p_radius, self.n_grid)

    @cached_property
    def _kappa(self) -> np.ndarray:
        r = self._rgrid
        if self.ham.family == "eikonal":
            return r
        return 0.5 * r * r

    @cached_property
    def _inv_sqrt_matrix(self) -> np.ndarray | None:
        if self.ham.family != "quadratic_anisotropic":
            return None
        w, v = np.linalg.eigh(self.ham.matrix)
        return v @ np.diag(w ** -0.5) @ v.T

    def _radial_magnitude(self, xi) -> np.ndarray:
        """|xi| after the change of momentum variable that makes the kinetic
        part radial (p = A^{-1/2} q for the anisotropic family)."""
        xi = np.asarray(xi, dtype=float)
        if self._inv_sqrt_matrix is not None:
            xi = np.einsum("ij,...j->...i", self._inv_sqrt_matrix, xi)
        return np.linalg.norm(xi, axis=-1)

    def eval(self, x, xi):
        """L(x, xi) by grid supremum; value_cap where the sup hits the rim.

        x: (..., dim), xi: (..., dim) with matching leading shape.
        """
        m = self._radial_magnitude(xi)
        scores = m[..., None] * self._rgrid - self._kappa
        idx = np.argmax(scores, axis=-1)  # first max: |xi| = 1 eikonal stays finite
        best = np.take_along_axis(scores, idx[..., None], axis=-1)[..., 0]
        vals = best + self.ham.f_eff(x)
        capped = idx == (self.n_grid - 1)
        return np.where(capped, self.value_cap, vals)

    def closed_form(self, x, xi):
        """Exact conjugate for the family; same cap convention."""
        xi = np.asarray(xi, dtype=float)
        fe = self.ham.f_eff(x)
        if self.ham.family == "eikonal":
            norm = np.linalg.norm(xi, axis=-1)
            return np.where(norm <= 1.0 + 1e-15, fe, self.value_cap)
        if self.ham.family == "quadratic":
            return 0.5 * np.sum(xi * xi, axis=-1) + fe
        ainv = np.linalg.inv(self.ham.matrix)
        return 0.5 * np.einsum("...i,ij,...j->...", xi, ainv, xi) + fe

    def is_finite(self, value) -> np.ndarray:
        return np.asarray(value) < 0.5 * self.value_cap


def fenchel_gap(ham: Hamiltonian, lag: Lagrangian, x, p, xi):
    """L(x, xi) + H(x, p) - xi . p; nonnegative, zero on conjugate pairs."""
    p = np.asarray(p, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return lag.eval(x, xi) + ham.eval(x, p) - np.sum(xi * p, axis=-1)


def conjugate_momentum(ham: Hamiltonian, lag: Lagrangian, x, xi, n_r: int = 2001, n_ang: int = 64, tie_tol: float = 1e-7):
    """A momentum q with (q, xi) conjugate: grid argmin of the Fenchel gap.

    Gap minimizers can form a ray (eikonal at |xi| = 1); among near-minimal q
    the one with smallest |H(x, q)| is returned, which selects the critical
    level representative.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if ham.dim == 1:
        qs = np.linspace(-lag.p_radius, lag.p_radius, 2 * n_r - 1)[:, None]
    else:
        r = np.linspace(0.0, lag.p_radius, n_r)
        th = np.linspace(0.0, 2 * np.pi, n_ang, endpoint=False)
        qs = np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], axis=-1)
    lval = float(lag.eval(x, xi))
    hvals = ham.eval(x[None, :], qs)
    gaps = lval + hvals - qs @ xi
    gmin = np.min(gaps)
    near = np.flatnonzero(gaps <= gmin + tie_tol)
    pick = near[np.argmin(np.abs(hvals[near]))]
    return qs[pick].copy()


# ---------------------------------------------------------------------------
# Critical set


@dataclass(frozen=True)
class CriticalPoint:
    x: np.ndarray
    p: np.ndarray
    xi: np.ndarray | None  # None at kinks (no momentum gradient)


@dataclass(frozen=True)
class CriticalSample:
    level: float
    points: tuple  # every sampled (x, p) on {H = c}
    s_points: tuple  # the subset carrying xi = D_p H

    def __len__(self):
        return len(self.points)


def _domain_grid(domain, n_x: int) -> np.ndarray:
    if isinstance(domain, Interval):
        return np.linspace(domain.a, domain.b, n_x)[:, None]
    xs = np.linspace(domain.ax, domain.bx, n_x)
    ys = np.linspace(domain.ay, domain.by, n_x)
    return np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)


def _directions(dim: int, n_dir: int) -> np.ndarray:
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    th = np.linspace(0.0, 2 * np.pi, n_dir, endpoint=False)
    return np.stack([np.cos(th), np.sin(th)], axis=-1)


def critical_points(ham: Hamiltonian, c: float, domain, n_x: int = 41, n_dir: int = 16, kink_tol: float = 1e-9) -> CriticalSample:
    """Sample {H = c} by the family's closed-form momentum radius.

    Raises EmptyCriticalSet when no sampled x admits a critical momentum
    (c below the critical value everywhere).  Every returned point satisfies
    H(x, p) = c to rounding.
    """
    hamc = ham.normalized(c)
    xs = _domain_grid(domain, n_x if ham.dim == 1 else max(9, int(np.sqrt(n_x))))
    dirs = _directions(ham.dim, n_dir)
    pts, spts = [], []
    fe = hamc.f_eff(xs)
    for xrow, fv in zip(xs, fe):
        if ham.family == "eikonal":
            if fv > kink_tol:
                for d in dirs:
                    p = fv * d
                    pts.append(CriticalPoint(xrow, p, d.copy()))
                    spts.append(pts[-1])
            elif abs(fv) <= kink_tol:
                pts.append(CriticalPoint(xrow, np.zeros(ham.dim), None))
        else:
            if fv < -kink_tol:
                continue
            rad = np.sqrt(max(2.0 * fv, 0.0))
            if ham.family == "quadratic_anisotropic":
                w, v = np.linalg.eigh(ham.matrix)
                half_inv = v @ np.diag(w ** -0.5) @ v.T
                for d in dirs:
                    p = rad * (half_inv @ d)
                    xi = ham.matrix @ p
                    pt = CriticalPoint(xrow, p, xi)
                    pts.append(pt)
                    spts.append(pt)
            else:
                if rad <= kink_tol:
                    pt = CriticalPoint(xrow, np.zeros(ham.dim), np.zeros(ham.dim))
                    pts.append(pt)
                    spts.append(pt)
                else:
                    for d in dirs:
                        p = rad * d
                        pt = CriticalPoint(xrow, p, p.copy())
                        pts.append(pt)
                        spts.append(pt)
    if not pts:
        raise EmptyCriticalSet(f"no critical momenta at level {c}")
    return CriticalSample(level=c, points=tuple(pts), s_points=tuple(spts))


# ---------------------------------------------------------------------------
# Hypothesis diagnostics


@dataclass(frozen=True)
class ModulusEstimate:
    """Empirical lower modulus of the convexity gap at critical points.

    omega_lower[k] = min of the gap over all samples with r >= r_centers[k]
    (running min from the right), which is nondecreasing by construction and
    zero at r = 0 since p' = 0 is always sampled.  vacuous means no S-points
    existed so there was nothing to bound.
    """

    sign: str
    r_edges: np.ndarray
    r_centers: np.ndarray
    omega_lower: np.ndarray
    counts: np.ndarray
    n_points: int
    n_samples: int
    min_slack: float
    r_pos_threshold: float
    vacuous: bool
    passed: bool


def check_convexity_modulus(
    ham: Hamiltonian,
    c: float,
    domain,
    sign: str = "+",
    *,
    n_x: int = 21,
    n_dir: int = 12,
    n_pp: int = 400,
    n_bins: int = 12,
    pp_radius: float | None = None,
    r_pos_threshold: float = 0.05,
    pos_floor: float = 1e-8,
    rng: np.random.Generator | None = None,
) -> ModulusEstimate:
    """One-sided modulus estimate over S at level c.

    slack(x, p, p') = H(x, p+p') - H(x, p) - xi . p'  (>= 0 by convexity),
    binned by r = (xi . p')_+ for sign "+" and r = (-xi . p')_+ for sign "-".
    Passes when the lower envelope is nonnegative everywhere and strictly
    positive beyond r_pos_threshold; vacuously true when S is empty.
    """
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    rng = rng or np.random.default_rng(0)
    rho = pp_radius if pp_radius is not None else ham.p_bound
    sample = critical_points(ham, c, domain, n_x=n_x, n_dir=n_dir)
    spts = sample.s_points
    if not spts:
        return ModulusEstimate(
            sign=sign, r_edges=np.zeros(0), r_centers=np.zeros(0), omega_lower=np.zeros(0),
            counts=np.zeros(0, dtype=int), n_points=0, n_samples=0,
            min_slack=0.0, r_pos_threshold=r_pos_threshold, vacuous=True, passed=True,
        )
    rs, slacks = [], []
    for pt in spts:
        pp = rng.uniform(-rho, rho, size=(n_pp, ham.dim))
        pp = np.vstack([np.zeros((1, ham.dim)), pp])
        h0 = ham.eval(pt.x, pt.p)
        slack = ham.eval(pt.x[None, :], pt.p[None, :] + pp) - h0 - pp @ pt.xi
        proj = pp @ pt.xi
        r = np.maximum(proj if sign == "+" else -proj, 0.0)
        rs.append(r)
        slacks.append(slack)
    r = np.concatenate(rs)
    slack = np.concatenate(slacks)
    r_max = float(np.max(r))
    if r_max <= r_pos_threshold:
        # xi . p' never reaches past the threshold: nothing to bound out there
        return ModulusEstimate(
            sign=sign, r_edges=np.array([0.0, max(r_max, 0.0)]), r_centers=np.array([0.5 * r_max]),
            omega_lower=np.array([float(np.min(slack))]),
            counts=np.array([r.size]), n_points=len(spts), n_samples=r.size,
            min_slack=float(np.min(slack)), r_pos_threshold=r_pos_threshold,
            vacuous=True, passed=True,
        )
    # log-spaced edges from the threshold up: the zero-slack region of a
    # failing family sits just above the threshold and linear bins over the
    # full sampled range would wash it into the r = 0 bin
    edges = np.concatenate([[0.0], np.geomspace(r_pos_threshold, r_max, n_bins)])
    which = np.clip(np.digitize(r, edges) - 1, 0, n_bins - 1)
    raw = np.full(n_bins, np.inf)
    counts = np.zeros(n_bins, dtype=int)
    for k in range(n_bins):
        m = which == k
        counts[k] = int(np.sum(m))
        if counts[k]:
            raw[k] = float(np.min(slack[m]))
    omega = np.minimum.accumulate(raw[::-1])[::-1]  # min over bins to the right
    centers = 0.5 * (edges[:-1] + edges[1:])
    min_slack = float(np.min(slack))
    above = edges[:-1] >= r_pos_threshold  # whole bin beyond the threshold
    populated = above & (counts > 0)
    passed = (
        min_slack >= -1e-9
        and bool(np.any(populated))
        and bool(np.all(omega[populated] > pos_floor))
    )
    return ModulusEstimate(
        sign=sign, r_edges=edges, r_centers=centers,
        omega_lower=np.where(np.isfinite(omega), omega, np.nan),
        counts=counts, n_points=len(spts), n_samples=int(r.size), min_slack=min_slack,
        r_pos_threshold=r_pos_threshold, vacuous=False, passed=bool(passed),
    )


@dataclass(frozen=True)
class ScalingTrendReport:
    """Empirical omega_1(delta) = max over S of the scaling excess / delta."""

    sign: str
    deltas: np.ndarray
    omega1: np.ndarray
    closed_omega1: np.ndarray | None
    n_points: int
    vacuous: bool
    passed: bool


def check_scaling_bound(
    ham: Hamiltonian,
    c: float,
    lag: Lagrangian,
    domain,
    sign: str = "+",
    deltas=(0.1, 0.05, 0.025),
    *,
    n_x: int = 21,
    n_dir: int = 12,
    decrease_factor: float = 0.9,
) -> ScalingTrendReport:
    """Excess L(x, (1 +/- d) xi) - (1 +/- d) L(x, xi) over S, per delta.

    Passes when omega_1 decreases by at least decrease_factor at each halving
    of delta (vacuously when S is empty).  The quadratic family has closed
    excess |xi|^2 d^2 / 2, reported alongside for the cross-check.
    """
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    hamc = ham.normalized(c)
    sample = critical_points(ham, c, domain, n_x=n_x, n_dir=n_dir)
    spts = [pt for pt in sample.s_points if pt.xi is not None]
    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    if not spts:
        return ScalingTrendReport(sign=sign, deltas=deltas, omega1=np.zeros(len(deltas)),
                                  closed_omega1=None, n_points=0, vacuous=True, passed=True)
    xs = np.stack([pt.x for pt in spts])
    xis = np.stack([pt.xi for pt in spts])
    lagc = Lagrangian(hamc, p_radius=lag.p_radius, n_grid=lag.n_grid, value_cap=lag.value_cap)
    base = lagc.eval(xs, xis)
    omega1 = np.zeros(len(deltas))
    closed = np.zeros(len(deltas)) if ham.family != "eikonal" else None
    s = 1.0 if sign == "+" else -1.0
    base_finite = lagc.is_finite(base)
    for k, d in enumerate(deltas):
        scaled = lagc.eval(xs, (1.0 + s * d) * xis)
        capped = base_finite & ~lagc.is_finite(scaled)
        finite = lagc.is_finite(scaled) & base_finite
        excess = scaled[finite] - (1.0 + s * d) * base[finite]
        if np.any(capped):
            # scaled momentum left the domain of L: the bound fails outright
            omega1[k] = np.inf
        else:
            omega1[k] = float(np.max(excess) / d) if excess.size else 0.0
        if closed is not None:
            closed[k] = float(0.5 * d * np.max(np.sum(xis * xis, axis=-1)))
    drop = all(omega1[k + 1] <= decrease_factor * omega1[k] + 1e-12 for k in range(len(deltas) - 1))
    passed = bool(np.all(np.isfinite(omega1))) and (
        bool(drop and omega1[0] > 0) or bool(np.all(omega1 <= 1e-12))
    )
    return ScalingTrendReport(sign=sign, deltas=deltas, omega1=omega1, closed_omega1=closed,
                              n_points=len(spts), vacuous=False, passed=passed)


# ---------------------------------------------------------------------------
# Assumption spot checks (pipeline preflight)


def convexity_report(ham: Hamiltonian, domain, rng: np.random.Generator, n: int = 400) -> float:
    """Max midpoint-convexity violation of H in p over random samples; <= 0 up
    to rounding for every built-in family."""
    lo = np.array([b[0] for b in domain.bounds()])
    hi = np.array([b[1] for b in domain.bounds()])
    xs = rng.uniform(lo, hi, size=(n, ham.dim))
    p = rng.uniform(-ham.p_bound, ham.p_bound, size=(n, ham.dim))
    q = rng.uniform(-ham.p_bound, ham.p_bound, size=(n, ham.dim))
    mid = ham.eval(xs, 0.5 * (p + q))
    avg = 0.5 * (ham.eval(xs, p) + ham.eval(xs, q))
    return float(np.max(mid - avg))


def coercivity_report(ham: Hamiltonian, domain, radii=(2.0, 4.0, 8.0)) -> dict:
    """min over x and directions of H(x, R d) for growing R; must increase."""
    xs = _domain_grid(domain, 17)
    dirs = _directions(ham.dim, 16)
    mins = []
    for rad in radii:
        vals = [float(np.min(ham.eval(xs, rad * d[None, :].repeat(len(xs), 0)))) for d in dirs]
        mins.append(min(vals))
    increasing = all(mins[i + 1] > mins[i] for i in range(len(mins) - 1))
    return {"radii": list(radii), "min_H": mins, "increasing": increasing}
