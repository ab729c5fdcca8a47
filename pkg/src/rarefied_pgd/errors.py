class NumericalError(RuntimeError):
    """A solve failed for numerical reasons (singular system, breakdown)."""


class NearSingularError(NumericalError):
    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(message)
        self.condition = condition


class ConvergenceError(NumericalError):
    """Iteration cap reached; ``partial`` carries the last iterate."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class OutOfRangeError(ValueError):
    pass
