"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised for ill-posed or degenerate grid domains."""


class StencilError(ValueError):
    """Raised when a discrete ball stencil cannot be built."""


class SolveError(RuntimeError):
    """Raised when a solver fails structurally (e.g. line search breakdown)."""


class ContractError(RuntimeError):
    """Raised when a verify-after-construct operation misses its contracts.

    Carries the measured margins so callers can report what failed and by
    how much.
    """

    def __init__(self, message, margins=None):
        super().__init__(message)
        self.margins = margins


class ConfigError(ValueError):
    """Raised for invalid run configuration; message names the failing key."""


class ExprError(ValueError):
    """Raised for boundary-expression parse/validation failures."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position
