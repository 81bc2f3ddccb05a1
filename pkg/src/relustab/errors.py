"""Exception types shared across the package."""


class LayoutError(ValueError):
    """Parameter layout does not match the operation or the datum."""


class BoundaryError(ArithmeticError):
    """A preactivation sits within tolerance of its activation boundary."""

    def __init__(self, message, units=()):
        super().__init__(message)
        self.units = tuple(units)


class AnchorError(ValueError):
    pass


class UnderflowError(ArithmeticError):
    pass


class RegionError(ValueError):
    pass


class DegeneratePairError(ValueError):
    pass


class EnumerationLimitError(RuntimeError):
    pass


class ConvergenceError(ArithmeticError):
    """Iterative routine hit its iteration cap; ``gap`` is the last residual."""

    def __init__(self, message, gap=float("nan")):
        super().__init__(message)
        self.gap = gap


class SearchError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    """Gradient descent produced a non-finite iterate."""

    def __init__(self, message, last_finite=None, step=None):
        super().__init__(message)
        self.last_finite = last_finite
        self.step = step


class ConfigError(ValueError):
    """Configuration failed validation; ``problems`` lists every failure."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
