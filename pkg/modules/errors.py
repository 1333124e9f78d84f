"""Exception types raised across the ragd modules.

Library code raises these; only the CLI layer (``app.py`` / ``modules/harness.py``)
turns them into exit codes.
"""


class RagdError(Exception):
    """Base class for every error raised by ragd."""


class DomainError(RagdError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class InjectivityError(DomainError):
    """A tangent vector is longer than the injectivity radius of the sphere."""


class AntipodalError(DomainError):
    """The logarithm was asked for between antipodal sphere points."""


class ConvergenceError(RagdError, RuntimeError):
    """An iterative routine did not reach its tolerance."""


class NonFiniteError(RagdError, FloatingPointError):
    """A gradient or iterate contains NaN or inf."""


class MissingDataError(RagdError):
    """A trace lacks the data a post-hoc certification needs."""


class HypothesisError(RagdError):
    """A bound was requested outside the hypotheses that define it."""


class RuntimeContainmentError(RagdError):
    """An iterate left the region the problem constants are valid on."""


class CertifiedBallExit(RuntimeContainmentError):
    """An iterate left the ball on which mu and L were certified."""


class SolverAbort(RagdError):
    """Internal invariant broken during a solver run (xi left [2*mu*Delta, 1))."""


class ConfigError(RagdError):
    """An experiment configuration could not be parsed or validated."""
