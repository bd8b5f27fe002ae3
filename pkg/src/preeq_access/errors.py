"""Exception types raised across the simulator."""


class UnsupportedOrder(ValueError):
    pass


class NonPositiveDistance(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class ConfigError(ValueError):
    pass


class EmptyActiveSet(ValueError):
    pass


class Overdetermined(ValueError):
    """Raised when a CE problem has at least as many observations as unknowns."""


class SingularSystem(ArithmeticError):
    pass


class NumericalDivergence(FloatingPointError):
    def __init__(self, stage, iteration, quantity=""):
        self.stage = stage
        self.iteration = iteration
        msg = f"{stage}: non-finite state at iteration {iteration}"
        if quantity:
            msg += f" ({quantity})"
        super().__init__(msg)


class StageError(RuntimeError):
    """Wraps a failure inside one receiver stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
