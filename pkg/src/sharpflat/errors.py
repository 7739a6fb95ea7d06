"""Exception types raised across the package."""


class ResonanceError(ValueError):
    """A present oscillatory mode has |alpha . omega| below the resonance threshold."""


class ModeCapError(RuntimeError):
    """A product produced Fourier modes beyond the configured maximum |alpha|."""


class NonZeroMeanError(ValueError):
    """A zero-mean antiderivative was requested for an input with nonzero average."""


class ClosureError(ValueError):
    """The standard-averaging closure <phi> = id is violated."""


class StabilityError(FloatingPointError):
    """A time-stepping run exceeded the stability guard."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GridMismatchError(ValueError):
    """Two trajectories do not share a compatible uniform time grid."""


class InsufficientDataError(ValueError):
    """Not enough usable points to fit a convergence order."""
