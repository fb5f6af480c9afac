"""Exception types shared across the solver modules."""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class ZeroPivotError(ArithmeticError):
    """A zero (or structurally missing) diagonal entry was met.

    ``row`` holds the offending row index when it is known.
    """

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DivergenceError(ArithmeticError):
    """A non-finite value appeared inside an inner iteration."""

    def __init__(self, message, sweep=None, growth=None, source=None):
        super().__init__(message)
        self.sweep = sweep
        self.growth = growth
        self.source = source


class MatrixMarketError(ValueError):
    """Malformed or unsupported Matrix Market content."""


class InterpolationError(ValueError):
    """An F point has no interpolatory set and no fallback applies."""


class SolverError(ArithmeticError):
    """A Krylov iteration produced a non-finite quantity."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
