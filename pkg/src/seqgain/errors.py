"""Exception types shared across the package."""


class SeqgainError(Exception):
    """Base class for all package errors."""


class ImpossibleObservationError(SeqgainError):
    """An observation had zero likelihood at every grid point."""


class EmptyWindowError(SeqgainError):
    """A conditioning window contains no posterior mass."""


class DegenerateDesignError(SeqgainError):
    """No convex combination of candidate information matrices is positive definite."""


class ModelViolationError(SeqgainError):
    """A model produced a value outside its declared bounds."""


class ValidationError(SeqgainError):
    """An experiment configuration is invalid.

    ``field`` names the offending configuration key so that CLI error
    messages can point at it.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
