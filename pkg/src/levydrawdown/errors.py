"""Exception types shared across the package."""


class LevyDrawdownError(Exception):
    """Base class for all package-specific errors."""


class IterationError(LevyDrawdownError):
    """A bracketed root search failed to converge; the model is likely malformed."""


class InversionAccuracyError(LevyDrawdownError):
    """A Laplace inversion's internal error estimate exceeded the hard limit."""


class UnsupportedRegimeError(LevyDrawdownError):
    """The requested quantity is undefined or degenerate for this model regime."""


class DrawdownDegenerateError(LevyDrawdownError):
    """The allowed drawdown t - xi(t) dips below the positivity margin on [x, b]."""


class InsufficientEventsError(LevyDrawdownError):
    """Too few simulated events of the requested kind for a meaningful estimate."""
