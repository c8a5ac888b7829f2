"""Exception types shared across the package."""


class QuasistaticError(Exception):
    """Base class for all package-specific errors."""


class GeometryError(QuasistaticError):
    """Unsupported shape pairing or degenerate contact geometry."""


class InfeasibleStartError(QuasistaticError):
    """A step was requested from a configuration with penetration beyond tolerance."""


class JamTerminationError(QuasistaticError):
    """The perfect-velocity-control LCP (zero gain matrix) has no solution.

    This is the expected outcome for grasp/jam commands with c = 0 or B = 0;
    callers treat it as a first-class result, not a bug.
    """

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class TheoremViolationError(QuasistaticError):
    """Ray termination despite a positive-definite gain matrix.

    Existence is guaranteed for c > 0, B > 0, so this always indicates an
    assembly or solver bug.  Carries a JSON-able dump of the offending problem.
    """

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump


class PivotLimitError(QuasistaticError):
    """Lemke pivoting exceeded its budget (cycling despite safeguards)."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump
