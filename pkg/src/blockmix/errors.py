"""Exception hierarchy.

Every exception carries a short ``category`` string; the command-line driver
prints it so that callers can dispatch on failures without parsing messages.
"""


class BlockmixError(Exception):
    category = "error"


class InvalidParameterError(BlockmixError, ValueError):
    category = "invalid-parameter"


class InvalidInputError(BlockmixError, ValueError):
    category = "invalid-input"


class ParseError(InvalidInputError):
    category = "parse-error"


class NumericalError(BlockmixError, ArithmeticError):
    category = "numerical-error"


class EmptyComponentError(BlockmixError):
    """Raised inside a single AECM run when a component loses its mass."""

    category = "empty-component"


class FitFailureError(BlockmixError):
    category = "fit-failure"


class SelectionFailureError(BlockmixError):
    category = "selection-failure"
