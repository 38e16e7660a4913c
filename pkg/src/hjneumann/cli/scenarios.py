"""Built-in scenarios, stored as config text so they exercise the parser.

Bounds in the checks.* keys are claims the verdict page enforces; they come
from closed-form values where one exists and from grid-refinement
measurements where only the discrete level is available.
"""

from __future__ import annotations

from ..errors import ConfigError
from .config import ScenarioConfig, build_scenario

__all__ = ["BUILTINS", "builtin_names", "get_builtin_text", "resolve"]


_EIKONAL_ZERO_G = """
name = eikonal-zero-g
description = Flat eikonal family on the unit interval, homogeneous oblique data
seed = 0
domain.kind = interval
domain.bounds = 0 1
hamiltonian.family = eikonal
hamiltonian.potential = zero
boundary.gamma = normal
boundary.g = 0
initial.id = sine
initial.amplitude = 1
grid.h = 0.005
evolution.t_final = 3
evolution.n_snapshots = 17
checks.c_expected = 0
checks.c_tol = 0.02
checks.d_oracle = zero
checks.d_tol = 0.03
checks.aubry_expect = all
checks.gap_threshold = 0.05
checks.gap_time = 2
checks.var_points = 5
checks.var_mode = match
"""

_QUADRATIC_WELL = """
name = quadratic-well
description = Quadratic family with a parabolic well at the midpoint
seed = 0
domain.kind = interval
domain.bounds = 0 1
hamiltonian.family = quadratic
hamiltonian.potential = bowl
hamiltonian.p_bound = 2.5
boundary.gamma = normal
boundary.g = 0
initial.id = zero
grid.h = 0.005
evolution.t_final = 8
evolution.n_snapshots = 17
checks.c_expected = 0
checks.c_tol = 0.02
checks.d_oracle = parabolic-well
checks.d_tol = 0.05
checks.aubry_expect = center
checks.gap_threshold = 0.08
checks.gap_time = 5
"""

_EIKONAL_WELL = """
name = eikonal-well
description = Eikonal family with a parabolic well at the midpoint
seed = 0
domain.kind = interval
domain.bounds = 0 1
hamiltonian.family = eikonal
hamiltonian.potential = bowl
boundary.gamma = normal
boundary.g = 0
initial.id = sine
initial.amplitude = 1
grid.h = 0.005
evolution.t_final = 4
evolution.n_snapshots = 17
checks.c_expected = 0
checks.c_tol = 0.02
checks.d_oracle = cubic-well
checks.d_tol = 0.03
checks.aubry_expect = center-cluster
checks.aubry_radius = 0.14
checks.gap_threshold = 0.05
checks.gap_time = 3
"""

_QUADRATIC_WELL_2D = """
name = quadratic-well-2d
description = Quadratic family with a radial well on the unit square
seed = 0
domain.kind = rectangle
domain.bounds = 0 1 0 1
hamiltonian.family = quadratic
hamiltonian.potential = bowl
hamiltonian.p_bound = 2.5
boundary.gamma = normal
boundary.g = 0
initial.id = zero
grid.h = 0.03125
evolution.t_final = 8
evolution.n_snapshots = 17
distance.t_max = 24
distance.stride = 4
checks.c_expected = 0
checks.c_tol = 0.15
checks.c_agree_tol = 0.05
checks.d_oracle = parabolic-well
checks.d_tol = 0.15
checks.aubry_expect = center
checks.gap_threshold = 0.15
checks.gap_time = 5
checks.scaling_tol = 5e-6
checks.n_random = 120
checks.var_points = 2
"""

BUILTINS = {
    "eikonal-zero-g": _EIKONAL_ZERO_G,
    "quadratic-well": _QUADRATIC_WELL,
    "eikonal-well": _EIKONAL_WELL,
    "quadratic-well-2d": _QUADRATIC_WELL_2D,
}


def builtin_names():
    return tuple(BUILTINS)


def get_builtin_text(name: str) -> str:
    try:
        return BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown built-in scenario {name!r}; "
                          f"choices: {', '.join(BUILTINS)}") from None


def resolve(name: str) -> ScenarioConfig:
    """Build a named built-in scenario."""
    return build_scenario(get_builtin_text(name), source=f"<builtin:{name}>")


def describe(name: str) -> str:
    return resolve(name).description
