"""Scenario configs: flat ``key = value`` text with dotted section names.

A config parses totally or dies with a line/field diagnostic; unknown keys
are hard errors, as are duplicates and missing required keys.  Values are
whitespace-separated tokens.  ``#`` starts a comment anywhere on a line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..geometry import BoundaryData, Interval, Rectangle
from ..hamiltonian import Hamiltonian, eikonal, quadratic, quadratic_anisotropic

__all__ = ["ScenarioConfig", "parse_items", "build_scenario", "load_config_text"]


def parse_items(text: str, source: str = "<config>"):
    """Return ordered (lineno, key, value) triples; reject malformed lines."""
    items = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in seen:
            raise ConfigError(
                f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        items.append((lineno, key, value))
    return items


def _as_float(source, lineno, key, value) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{source}:{lineno}: key {key!r} needs a number, got {value!r}") from None


def _as_int(source, lineno, key, value) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{source}:{lineno}: key {key!r} needs an integer, got {value!r}") from None


def _as_floats(source, lineno, key, value, n=None):
    toks = value.split()
    try:
        out = tuple(float(t) for t in toks)
    except ValueError:
        raise ConfigError(f"{source}:{lineno}: key {key!r} needs numbers, got {value!r}") from None
    if n is not None and len(out) != n:
        raise ConfigError(f"{source}:{lineno}: key {key!r} needs {n} numbers, got {len(out)}")
    return out


def _as_choice(source, lineno, key, value, choices) -> str:
    if value not in choices:
        opts = ", ".join(sorted(choices))
        raise ConfigError(f"{source}:{lineno}: key {key!r} must be one of {opts}; got {value!r}")
    return value


# key -> kind tag; face-suffixed boundary keys are validated dynamically.
_KNOWN = {
    "name": "str",
    "description": "str",
    "seed": "int",
    "domain.kind": "choice",
    "domain.bounds": "floats",
    "hamiltonian.family": "choice",
    "hamiltonian.potential": "choice",
    "hamiltonian.center": "floats",
    "hamiltonian.offset": "float",
    "hamiltonian.p_bound": "float",
    "hamiltonian.matrix": "floats",
    "boundary.gamma": "choice",
    "boundary.g": "float",
    "initial.id": "choice",
    "initial.value": "float",
    "initial.amplitude": "float",
    "grid.h": "float",
    "evolution.t_final": "float",
    "evolution.dt": "float",
    "evolution.n_snapshots": "int",
    "distance.t_max": "float",
    "distance.stride": "int",
    "checks.c_expected": "float",
    "checks.c_tol": "float",
    "checks.c_agree_tol": "float",
    "checks.d_oracle": "choice",
    "checks.d_tol": "float",
    "checks.aubry_expect": "choice",
    "checks.aubry_radius": "float",
    "checks.gap_threshold": "float",
    "checks.gap_time": "float",
    "checks.equality_tol": "float",
    "checks.n_random": "int",
    "checks.var_points": "int",
    "checks.var_tol": "float",
    "checks.var_mode": "choice",
    "checks.scaling_tol": "float",
}

_CHOICES = {
    "domain.kind": {"interval", "rectangle"},
    "hamiltonian.family": {"eikonal", "quadratic", "quadratic_anisotropic"},
    "hamiltonian.potential": {"zero", "bowl"},
    "boundary.gamma": {"normal"},
    "initial.id": {"zero", "constant", "sine", "tent"},
    "checks.d_oracle": {"zero", "parabolic-well", "cubic-well"},
    "checks.aubry_expect": {"all", "center", "center-cluster"},
    "checks.var_mode": {"match", "upper"},
}

_FACES_1D = ("left", "right")
_FACES_2D = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved scenario: every object the pipeline needs, plus the echo."""

    name: str
    description: str
    seed: int
    domain: object
    ham: Hamiltonian
    bdata: BoundaryData
    initial_id: str
    initial_params: dict
    h: float
    dt: float | None
    t_final: float
    n_snapshots: int
    distance_t_max: float
    distance_stride: int
    checks: dict
    echo: tuple = field(repr=False, default=())

    def initial_values(self, grid) -> np.ndarray:
        """Evaluate the configured initial datum on a grid."""
        pos = grid.positions
        if self.initial_id == "zero":
            return np.zeros(grid.shape)
        if self.initial_id == "constant":
            return np.full(grid.shape, self.initial_params["value"])
        amp = self.initial_params["amplitude"]
        if self.initial_id == "sine":
            out = amp * np.sin(2.0 * np.pi * pos[..., 0])
            for ax in range(1, self.domain.dim):
                out = out * np.sin(2.0 * np.pi * pos[..., ax])
            return out
        # tent: amp * (1 - 2 max_i |x_i - mid_i| / width_i), peak at the center
        lo = np.array([b[0] for b in self.domain.bounds()])
        hi = np.array([b[1] for b in self.domain.bounds()])
        mid = 0.5 * (lo + hi)
        rel = np.abs(pos - mid) / (hi - lo)
        return amp * (1.0 - 2.0 * np.max(rel, axis=-1))


def _face_names(dim: int):
    return _FACES_1D if dim == 1 else _FACES_2D


def _check_key(source, lineno, key, dim):
    if key in _KNOWN:
        return
    for prefix, kind in (("boundary.gamma.", "gamma"), ("boundary.g.", "g")):
        if key.startswith(prefix):
            face = key[len(prefix):]
            if face in _face_names(dim):
                return
            raise ConfigError(
                f"{source}:{lineno}: unknown face {face!r} in key {key!r} "
                f"(faces: {', '.join(_face_names(dim))})")
    raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")


_CHECK_DEFAULTS = {
    "c_tol": 0.02,
    "c_agree_tol": 0.02,
    "gap_threshold": 0.05,
    "n_random": 200,
    "var_points": 3,
    "var_tol": 0.08,
    "var_mode": "upper",
    "scaling_tol": 1e-6,
}


def build_scenario(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and validate config text into a ready-to-run ScenarioConfig."""
    items = parse_items(text, source)
    table = {key: (lineno, value) for lineno, key, value in items}

    def take(key, default=None):
        if key not in table:
            return default
        lineno, value = table.pop(key)
        kind = _KNOWN[key]
        if kind == "str":
            return value
        if kind == "int":
            return _as_int(source, lineno, key, value)
        if kind == "float":
            return _as_float(source, lineno, key, value)
        if kind == "floats":
            return _as_floats(source, lineno, key, value)
        return _as_choice(source, lineno, key, value, _CHOICES[key])

    def require(key):
        if key not in table:
            raise ConfigError(f"{source}: missing required key {key!r}")
        return take(key)

    # domain first: face-key validation depends on the dimension
    kind = require("domain.kind")
    bounds = require("domain.bounds")
    if kind == "interval":
        if len(bounds) != 2:
            raise ConfigError(f"{source}: 'domain.bounds' needs 2 numbers for an interval")
        if not bounds[0] < bounds[1]:
            raise ConfigError(f"{source}: 'domain.bounds' must satisfy a < b")
        domain = Interval(*bounds)
    else:
        if len(bounds) != 4:
            raise ConfigError(f"{source}: 'domain.bounds' needs 4 numbers for a rectangle")
        if not (bounds[0] < bounds[1] and bounds[2] < bounds[3]):
            raise ConfigError(f"{source}: 'domain.bounds' must satisfy ax < bx and ay < by")
        domain = Rectangle(*bounds)
    dim = domain.dim

    for lineno, key, _value in items:
        if key in ("domain.kind", "domain.bounds"):
            continue
        _check_key(source, lineno, key, dim)

    name = require("name")
    description = take("description", "")
    seed = take("seed", 0)

    family = require("hamiltonian.family")
    potential_id = require("hamiltonian.potential")
    lo = np.array([b[0] for b in domain.bounds()])
    hi = np.array([b[1] for b in domain.bounds()])
    center = take("hamiltonian.center")
    if center is None:
        center = tuple(0.5 * (lo + hi))
    elif len(center) != dim:
        raise ConfigError(f"{source}: 'hamiltonian.center' needs {dim} numbers")
    offset = take("hamiltonian.offset", 0.0)
    centre_arr = np.asarray(center)

    if potential_id == "zero":
        def potential(x):
            return np.zeros(np.asarray(x).shape[:-1])
    else:
        def potential(x):
            return np.sum((np.asarray(x) - centre_arr) ** 2, axis=-1)

    p_bound = take("hamiltonian.p_bound")
    matrix = take("hamiltonian.matrix")
    if family == "quadratic_anisotropic":
        if dim != 2:
            raise ConfigError(f"{source}: family 'quadratic_anisotropic' needs a rectangle domain")
        if matrix is None:
            raise ConfigError(f"{source}: missing required key 'hamiltonian.matrix'")
        if len(matrix) != 4:
            raise ConfigError(f"{source}: 'hamiltonian.matrix' needs 4 numbers (row-major 2x2)")
        mat = np.array(matrix).reshape(2, 2)
        kw = {} if p_bound is None else {"p_bound": p_bound}
        ham = quadratic_anisotropic(potential, mat, dim=2, offset=offset, **kw)
    else:
        if matrix is not None:
            raise ConfigError(f"{source}: 'hamiltonian.matrix' only applies to quadratic_anisotropic")
        factory = eikonal if family == "eikonal" else quadratic
        kw = {} if p_bound is None else {"p_bound": p_bound}
        ham = factory(potential, dim=dim, offset=offset, **kw)

    take("boundary.gamma", "normal")
    g_default = take("boundary.g", 0.0)
    bdata = BoundaryData.normal_field(domain, g_default)
    gamma = dict(bdata.gamma)
    g_map = dict(bdata.g)
    for lineno, key, value in items:
        if key.startswith("boundary.gamma."):
            face = key[len("boundary.gamma."):]
            vec = _as_floats(source, lineno, key, value, n=dim)
            gamma[face] = np.asarray(vec, dtype=float)
            table.pop(key, None)
        elif key.startswith("boundary.g."):
            face = key[len("boundary.g."):]
            gval = _as_float(source, lineno, key, value)
            g_map[face] = (lambda c: (lambda x: c))(gval)
            table.pop(key, None)
    bdata = BoundaryData(gamma=gamma, g=g_map)

    initial_id = require("initial.id")
    initial_params = {}
    value = take("initial.value")
    amplitude = take("initial.amplitude")
    if initial_id == "constant":
        initial_params["value"] = 0.0 if value is None else value
    elif value is not None:
        raise ConfigError(f"{source}: 'initial.value' only applies to initial.id = constant")
    if initial_id in ("sine", "tent"):
        initial_params["amplitude"] = 1.0 if amplitude is None else amplitude
    elif amplitude is not None:
        raise ConfigError(f"{source}: 'initial.amplitude' only applies to sine or tent data")

    h = require("grid.h")
    if h <= 0:
        raise ConfigError(f"{source}: 'grid.h' must be positive")
    dt = take("evolution.dt")
    t_final = require("evolution.t_final")
    if t_final <= 0:
        raise ConfigError(f"{source}: 'evolution.t_final' must be positive")
    n_snapshots = take("evolution.n_snapshots", 17)
    if n_snapshots < 4:
        raise ConfigError(f"{source}: 'evolution.n_snapshots' must be at least 4")
    distance_t_max = take("distance.t_max", 12.0)
    distance_stride = take("distance.stride", 4)

    checks = dict(_CHECK_DEFAULTS)
    for key in list(table):
        if key.startswith("checks."):
            checks[key[len("checks."):]] = take(key)
    checks.setdefault("gap_time", t_final)
    if checks.get("d_oracle") is not None and "d_tol" not in checks:
        raise ConfigError(f"{source}: 'checks.d_oracle' needs 'checks.d_tol'")
    if checks.get("aubry_expect") == "center-cluster" and "aubry_radius" not in checks:
        raise ConfigError(f"{source}: aubry_expect = center-cluster needs 'checks.aubry_radius'")

    if table:
        key = next(iter(table))
        lineno, _ = table[key]
        raise ConfigError(f"{source}:{lineno}: key {key!r} is not consumed by this scenario shape")

    echo = tuple((key, value) for _lineno, key, value in items)
    return ScenarioConfig(
        name=name, description=description, seed=seed, domain=domain, ham=ham,
        bdata=bdata, initial_id=initial_id, initial_params=initial_params,
        h=h, dt=dt, t_final=t_final, n_snapshots=n_snapshots,
        distance_t_max=distance_t_max, distance_stride=distance_stride,
        checks=checks, echo=echo)


def load_config_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
