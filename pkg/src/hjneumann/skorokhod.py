"""Reflected trajectories, the action functional, and the variational value.

The controlled dynamics is eta'(s) + l(s) gamma(eta(s)) = v(s) with eta(s)
kept in the closed domain, l >= 0, and l supported on boundary contact.  The
value of the evolution problem is the infimum over such triples of

    integral_0^t [ L(eta(s), -v(s)) + g(eta(s)) l(s) ] ds + u0(eta(t)),

which this module evaluates for explicit controls and minimizes over
piecewise-constant ones.  The minimizer search only ever produces upper
bounds; cross-checks compare them against grid solutions from above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfiniteAction, ObliquenessViolated, StepTooLarge
from .evolution import EvolutionRun, GridFunction
from .geometry import BoundaryData
from .hamiltonian import Hamiltonian, Lagrangian, conjugate_momentum


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A reflected path on a uniform time mesh with piecewise-constant data.

    eta has one more row than v and l; v[k], l[k] act on [t_mesh[k],
    t_mesh[k+1]).  faces[k] lists (face name, multiplier) pairs for the
    reflections inside that substep; lgamma[k] is the aggregated l*gamma
    vector actually applied, so the discrete dynamics reads
    (eta[k+1] - eta[k])/dt + lgamma[k] = v[k] exactly.
    """

    domain: object
    t_mesh: np.ndarray
    eta: np.ndarray
    v: np.ndarray
    l: np.ndarray
    lgamma: np.ndarray
    faces: tuple

    @property
    def dim(self) -> int:
        return self.eta.shape[1]

    @property
    def t_final(self) -> float:
        return float(self.t_mesh[-1])

    def check_invariants(self) -> "TrajectoryCheck":
        dts = np.diff(self.t_mesh)
        lo = np.array([b[0] for b in self.domain.bounds()])
        hi = np.array([b[1] for b in self.domain.bounds()])
        containment = float(np.max(np.maximum(lo - self.eta, self.eta - hi)))
        l_min = float(np.min(self.l)) if len(self.l) else 0.0
        dyn = (self.eta[1:] - self.eta[:-1]) / dts[:, None] + self.lgamma - self.v
        dynamics_sup = float(np.max(np.abs(dyn))) if len(dyn) else 0.0
        planes = {f.name: f for f in self.domain.faces()}
        comp = 0.0
        for k in range(len(self.l)):
            if self.l[k] <= 0.0:
                continue
            band = dts[k] * (4.0 * float(np.max(np.abs(self.v[k]))) + 1e-9)
            for name, _lf in self.faces[k]:
                f = planes[name]
                dist = abs(float(self.eta[k][f.axis]) - f.value)
                comp = max(comp, dist - band)
        return TrajectoryCheck(containment_violation=containment,
                               l_min=l_min,
                               complementarity_excess=comp,
                               dynamics_sup=dynamics_sup)


@dataclass(frozen=True)
class TrajectoryCheck:
    containment_violation: float  # max signed distance outside; <= 0 when ok
    l_min: float
    complementarity_excess: float  # contact-band excess of positive-l starts
    dynamics_sup: float

    @property
    def ok(self) -> bool:
        return (self.containment_violation <= 0.0 and self.l_min >= 0.0
                and self.complementarity_excess <= 0.0
                and self.dynamics_sup <= 1e-9)


def _face_data(domain, bdata: BoundaryData):
    out = []
    for f in domain.faces():
        gamma = bdata.gamma_at(f)
        gnu = float(gamma[f.axis]) * f.side
        if gnu <= 0.0:
            raise ObliquenessViolated(
                f"gamma on face {f.name} has normal component {gnu:.3g} <= 0")
        out.append((f, gamma, gnu))
    return out


def solve_skorokhod(
    x,
    v,
    domain,
    bdata: BoundaryData,
    t_final: float,
    *,
    max_face_iter: int = 8,
    max_depth: int = 6,
) -> Trajectory:
    """Integrate the reflected dynamics for per-substep constant controls.

    One substep: tentative point eta + dt v; each violated face contributes
    the unique multiplier l_f = overshoot / (dt gamma.nu) landing the normal
    coordinate exactly on the plane (the coordinate is snapped, which is the
    same algebra without the rounding).  Tangential gamma components may
    re-violate another face; after max_face_iter face solves the substep is
    split into 4 recursively, and StepTooLarge is raised at max_depth.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    m = v.shape[0]
    if v.shape[1] != domain.dim or x.shape != (domain.dim,):
        raise ValueError("control/point dimensions do not match the domain")
    fdata = _face_data(domain, bdata)
    dt = t_final / m

    def advance(eta, vk, step, depth):
        """One substep; returns (new eta, sum l, lgamma vector, faces list)."""
        tentative = eta + step * vk
        acc_l, acc_lg, hit = 0.0, np.zeros(domain.dim), []
        for _ in range(max_face_iter):
            worst, over = None, 0.0
            for f, gamma, gnu in fdata:
                o = (tentative[f.axis] - f.value) * f.side
                if o > over:
                    worst, over = (f, gamma, gnu), o
            if worst is None:
                return tentative, acc_l, acc_lg, hit
            f, gamma, gnu = worst
            lf = over / (step * gnu)
            tentative = tentative - (step * lf) * gamma
            tentative[f.axis] = f.value
            acc_l += lf
            acc_lg = acc_lg + lf * gamma
            hit.append((f.name, lf))
        if depth >= max_depth:
            raise StepTooLarge(
                f"containment not restored at {eta} after depth {depth}")
        quarter = step / 4.0
        acc_l, acc_lg, hit, point = 0.0, np.zeros(domain.dim), [], eta
        for _ in range(4):
            point, lq, lgq, hq = advance(point, vk, quarter, depth + 1)
            acc_l += 0.25 * lq
            acc_lg = acc_lg + 0.25 * lgq
            hit.extend(hq)
        return point, acc_l, acc_lg, hit

    eta = np.empty((m + 1, domain.dim))
    lvals = np.empty(m)
    lgamma = np.empty((m, domain.dim))
    faces = []
    eta[0] = x
    for k in range(m):
        eta[k + 1], lvals[k], lgamma[k], hit = advance(eta[k], v[k], dt, 0)
        faces.append(tuple(hit))
    return Trajectory(domain=domain, t_mesh=dt * np.arange(m + 1), eta=eta,
                      v=v, l=lvals, lgamma=lgamma, faces=tuple(faces))


@dataclass(frozen=True)
class ActionValue:
    integral: float  # time integral of L(eta, -v) + g(eta) l
    terminal: float
    total: float


def action(
    tr: Trajectory,
    lag: Lagrangian,
    bdata: BoundaryData,
    u_terminal: GridFunction | None = None,
) -> ActionValue:
    """Trapezoidal action of a trajectory; the Lagrangian sees -v.

    For the supported families L(x, xi) = L_kin(xi) + f_eff(x), so the
    conjugate part is evaluated once per distinct control value and the
    position dependence rides on f_eff alone (exact, not an approximation).
    """
    ham = lag.ham
    dts = np.diff(tr.t_mesh)
    fe = ham.f_eff(tr.eta)
    planes = {f.name: f for f in tr.domain.faces()}
    kin_cache: dict[bytes, float] = {}
    integral = 0.0
    for k in range(len(tr.v)):
        key = tr.v[k].tobytes()
        kin = kin_cache.get(key)
        if kin is None:
            lval = float(lag.eval(tr.eta[k], -tr.v[k]))
            if not lag.is_finite(lval):
                raise InfiniteAction(
                    f"control {-tr.v[k]} leaves the effective domain")
            kin = lval - float(fe[k])
            kin_cache[key] = kin
        integral += dts[k] * (kin + 0.5 * float(fe[k] + fe[k + 1]))
        for name, lf in tr.faces[k]:
            f = planes[name]
            integral += dts[k] * lf * bdata.g_at(f, tr.eta[k + 1])
    terminal = float(u_terminal.interp(tr.eta[-1])) if u_terminal is not None else 0.0
    return ActionValue(integral=integral, terminal=terminal,
                       total=integral + terminal)


# ---------------------------------------------------------------------------
# Variational value


@dataclass(frozen=True, eq=False)
class VariationalResult:
    value: float
    controls: np.ndarray  # (K, dim) piecewise-constant optimum found
    trajectory: Trajectory
    start_values: tuple  # best total per start, order = start index
    seed: int
    K: int


def variational_search(
    x,
    t: float,
    u0: GridFunction,
    ham: Hamiltonian,
    bdata: BoundaryData,
    *,
    K: int = 8,
    n_starts: int = 4,
    n_sweeps: int = 30,
    n_sub: int = 8,
    seed: int = 0,
    v_max: float | None = None,
    lag: Lagrangian | None = None,
) -> VariationalResult:
    """Upper bound on the variational value by coordinate descent.

    Controls are piecewise constant with K segments inside the box
    |v_i| <= v_max; each start runs coordinate descent with a halving step,
    one start from zero controls and the rest from seeded uniform draws
    (independent spawned generators, reproducible by the single seed).
    """
    domain = u0.grid.domain
    lag = lag or Lagrangian(ham)
    if v_max is None:
        v_max = 1.0 if ham.family == "eikonal" else ham.p_bound
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def objective(controls):
        vsub = np.repeat(controls, n_sub, axis=0)
        tr = solve_skorokhod(x, vsub, domain, bdata, t)
        try:
            return action(tr, lag, bdata, u_terminal=u0).total, tr
        except InfiniteAction:
            return np.inf, tr

    children = np.random.SeedSequence(seed).spawn(n_starts)
    best_value, best_controls, best_tr = np.inf, None, None
    start_values = []
    for s in range(n_starts):
        if s == 0:
            controls = np.zeros((K, ham.dim))
        else:
            rng = np.random.default_rng(children[s])
            controls = rng.uniform(-0.7 * v_max, 0.7 * v_max, size=(K, ham.dim))
        value, tr = objective(controls)
        step = 0.5 * v_max
        for _ in range(n_sweeps):
            improved = False
            for k in range(K):
                for d in range(ham.dim):
                    base = controls[k, d]
                    for cand in (base + step, base - step):
                        cand = float(np.clip(cand, -v_max, v_max))
                        if cand == base:
                            continue
                        controls[k, d] = cand
                        val, cand_tr = objective(controls)
                        if val < value - 1e-12:
                            value, tr, improved = val, cand_tr, True
                            base = cand
                        else:
                            controls[k, d] = base
            if not improved:
                step *= 0.5
                if step < 1e-2 * v_max:
                    break
        start_values.append(value)
        if value < best_value:
            best_value, best_controls, best_tr = value, controls.copy(), tr
    return VariationalResult(value=float(best_value), controls=best_controls,
                             trajectory=best_tr,
                             start_values=tuple(start_values), seed=seed, K=K)


def variational_value(x, t, u0, ham, bdata, **kw) -> float:
    return variational_search(x, t, u0, ham, bdata, **kw).value


def dpp_check(x, t: float, tau: float, u_run: EvolutionRun, ham: Hamiltonian,
              bdata: BoundaryData, **kw) -> float:
    """|inf over [0, tau] controls of action + u(., t - tau) - u(x, t)|.

    Both u(., t - tau) and u(., t) come from the run's snapshots
    (MissingSnapshot if absent); the returned discrepancy combines the
    optimizer's upper-bound slack with the scheme error.
    """
    if not 0.0 < tau <= t:
        raise ValueError("need 0 < tau <= t")
    u_mid = GridFunction(u_run.grid, u_run.value_at(t - tau))
    u_t = GridFunction(u_run.grid, u_run.value_at(t))
    val = variational_value(x, tau, u_mid, ham, bdata, **kw)
    return abs(val - float(u_t.interp(np.atleast_1d(np.asarray(x, float)))))


# ---------------------------------------------------------------------------
# Extremal identities


@dataclass(frozen=True)
class ExtremalReport:
    sup_hamiltonian: float  # sup over mesh of |H(eta, q)|
    sup_boundary: float  # sup over contact substeps of |gamma . q - g|
    sup_fenchel: float  # sup of |-q.v - H(eta, q) - L(eta, -v)|
    n_contacts: int


def momenta_from_controls(tr: Trajectory, ham: Hamiltonian,
                          lag: Lagrangian | None = None) -> np.ndarray:
    """Per-substep momentum conjugate to -v (subgradient of L at -v)."""
    lag = lag or Lagrangian(ham)
    cache: dict[bytes, np.ndarray] = {}
    q = np.empty_like(tr.v)
    for k in range(len(tr.v)):
        key = tr.v[k].tobytes()
        got = cache.get(key)
        if got is None:
            got = conjugate_momentum(ham, lag, tr.eta[k], -tr.v[k])
            cache[key] = got
        q[k] = got
    return q


def extremal_identity_check(
    tr: Trajectory,
    q: np.ndarray,
    hamc: Hamiltonian,
    bdata: BoundaryData,
    lag: Lagrangian | None = None,
) -> ExtremalReport:
    """Residuals of the three extremal identities along a candidate curve.

    On calibrated curves of the normalized problem: H(eta, q) = 0 on the
    mesh, gamma . q = g at boundary contact, and the conjugacy identity
    -q.v = H(eta, q) + L(eta, -v) on every substep.  Report-valued; the
    caller decides thresholds.
    """
    lag = lag or Lagrangian(hamc)
    planes = {f.name: f for f in tr.domain.faces()}
    sup_h, sup_b, sup_f, contacts = 0.0, 0.0, 0, 0
    sup_f = 0.0
    for k in range(len(tr.v)):
        hval = float(hamc.eval(tr.eta[k], q[k]))
        sup_h = max(sup_h, abs(hval))
        lval = float(lag.eval(tr.eta[k], -tr.v[k]))
        if lag.is_finite(lval):
            gap = -float(q[k] @ tr.v[k]) - hval - lval
            sup_f = max(sup_f, abs(gap))
        for name, _lf in tr.faces[k]:
            f = planes[name]
            gamma = bdata.gamma_at(f)
            gval = bdata.g_at(f, tr.eta[k + 1])
            sup_b = max(sup_b, abs(float(gamma @ q[k]) - gval))
            contacts += 1
    return ExtremalReport(sup_hamiltonian=sup_h, sup_boundary=sup_b,
                          sup_fenchel=sup_f, n_contacts=contacts)
