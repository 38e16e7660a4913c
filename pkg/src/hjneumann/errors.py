"""Exception types shared across the toolkit.

Every failure mode that callers are expected to catch gets its own class here;
anything else is a plain ValueError/RuntimeError and means a caller bug.
"""


class HJNError(Exception):
    """Base class for toolkit errors."""


class NotOnBoundary(HJNError):
    """Point is not within tolerance of the domain boundary."""


class CornerPoint(HJNError):
    """Point lies at a rectangle corner, where no outward normal exists."""


class ObliquenessViolated(HJNError):
    """gamma . nu <= 0 somewhere: the boundary condition is not oblique."""


class EmptyCriticalSet(HJNError):
    """No critical momenta were found at the requested level."""


class CflViolation(HJNError):
    """Requested time step exceeds the monotonicity bound."""


class NonConvergence(HJNError):
    """An iteration hit its horizon without meeting its residual target."""

    def __init__(self, message, drift=None, residual=None):
        super().__init__(message)
        self.drift = drift
        self.residual = residual


class StepTooLarge(HJNError):
    """Trajectory step could not be resolved even after recursive splitting."""


class InfiniteAction(HJNError):
    """Running cost hit the Lagrangian cap: the control is not admissible."""


class MissingSnapshot(HJNError):
    """The evolution run holds no snapshot near the requested time."""


class EmptyAubrySet(HJNError):
    """No Aubry points were flagged; the projected formula is undefined."""


class InsufficientHorizon(HJNError):
    """Run too short for the requested asymptotic quantity to stabilize."""


class ConfigError(HJNError):
    """Scenario config text could not be parsed or validated.

    The message carries source name and line number where applicable so the
    CLI can print it verbatim as the diagnostic.
    """


class ConfigError(HJNError):
    """Malformed or unknown scenario configuration."""
