"""Exception hierarchy shared across the package."""


class PotgamesError(Exception):
    """Base class for all package errors."""


class ValidationError(PotgamesError, ValueError):
    """Raised when a value, game component, or scenario file is malformed.

    The message carries a dotted field path when the error originates from
    structured input (e.g. ``distribution.probs``).
    """


class DomainError(PotgamesError, ValueError):
    """Raised when a reward or value function is evaluated outside its domain."""


class BudgetExceededError(PotgamesError, RuntimeError):
    """Raised when a brute-force sweep would exceed the evaluation budget."""


class InnerSolveError(PotgamesError, RuntimeError):
    """Raised when an inner maximization fails to reach its tolerance."""
