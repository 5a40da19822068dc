class KnoError(Exception):
    """Base class for errors raised by this package."""


class ContractError(KnoError, ValueError):
    """A precondition on shapes, ranges or types was violated."""


class NumericError(KnoError, ArithmeticError):
    """A non-finite value or solver breakdown was detected."""

    def __init__(self, message: str, node_id: int | None = None, checkpoint: str | None = None):
        super().__init__(message)
        self.node_id = node_id
        self.checkpoint = checkpoint


class ConditioningError(NumericError):
    """A factorization failed or a linear system is numerically singular."""

    def __init__(self, message: str, min_pivot: float | None = None):
        super().__init__(message)
        self.min_pivot = min_pivot
