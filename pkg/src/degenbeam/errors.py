"""Exception types raised by the degenerate beam laboratory."""


class DegenBeamError(Exception):
    """Base class for all errors raised by this package."""


class DegeneracyOutOfRange(DegenBeamError):
    """The degeneracy exponent K falls outside (0, 2)."""


class InvalidProfile(DegenBeamError):
    """A coefficient a(x) is not positive on (0, 1] or violates a(0) = 0."""


class GridTooCoarse(DegenBeamError):
    pass


class SingularAtOrigin(DegenBeamError):
    """A vector weighted by 1/a does not vanish at x = 0."""


class InternalSolverFailure(DegenBeamError):
    pass


class TimeGridMismatch(DegenBeamError):
    """T is not an integer multiple of dt, or a series does not match the time grid."""


class ZeroEnergyData(DegenBeamError):
    pass


class TooManyModes(DegenBeamError):
    pass


class ControlSynthesisFailed(DegenBeamError):
    """Conjugate gradient did not reach the requested tolerance.

    The best iterate found is attached as ``best`` (an ``HUMSolution`` or None).
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
