"""Exception types shared across the package."""


class OutOfDomainError(ValueError):
    """A point lies outside a chart domain beyond the location tolerance."""


class InvalidDataError(ValueError):
    """A field produced NaN/inf or is otherwise unusable at a sample."""


class NumericDomainError(ArithmeticError):
    """A metric sample is not SPD, or an iteration produced non-finite values."""


class UncoveredPointError(RuntimeError):
    """No chart's partition-of-unity weight is positive at a point."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points


class IterationFailure(RuntimeError):
    """An inner CG solve did not converge within its iteration budget."""

    def __init__(self, message, chart=None, report=None):
        super().__init__(message)
        self.chart = chart
        self.report = report


class DDMNonConvergence(RuntimeError):
    """The outer iteration hit ``max_outer`` without the warm-start fixed point."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class AnalysisUnavailable(LookupError):
    """Exact-solution data needed for error norms is missing."""
