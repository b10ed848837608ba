"""Exception types shared across the package."""


class SeqpolError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(SeqpolError, ValueError):
    """An argument violates a documented precondition or invariant."""


class DegenerateBranchError(SeqpolError, ArithmeticError):
    """A conditional branch has vanishing weight, so no state or estimate exists."""


class UnresolvableOutcomeError(SeqpolError, ArithmeticError):
    """An estimate was requested for an outcome with negligible probability.

    The offending outcome label, when known, is attached as ``outcome``.
    """

    def __init__(self, message: str, outcome=None):
        super().__init__(message)
        self.outcome = outcome
