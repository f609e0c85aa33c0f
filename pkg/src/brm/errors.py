"""Exception types raised by the library.

Validation problems derive from ``BrmValueError`` and numerical failures from
``BrmNumericalError``; the CLI maps the two families to distinct exit codes.
"""


class BrmValueError(ValueError):
    """Invalid input: bad shapes, violated preconditions, unsupported options."""


class BrmNumericalError(ArithmeticError):
    """A computation ran but could not produce a trustworthy result."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class NotPositiveDefinite(BrmValueError):
    pass


class AllNonpositive(BrmValueError):
    pass


class PreconditionViolation(BrmValueError):
    pass


class Unsupported(BrmValueError):
    pass


class SignConditionViolation(BrmValueError):
    pass


class NoMinimizer(BrmValueError):
    pass


class Degenerate(BrmNumericalError):
    pass


class IllConditionedK(BrmNumericalError):
    pass


class TruncationNotConverged(BrmNumericalError):
    pass


class InsufficientHits(BrmNumericalError):
    pass
