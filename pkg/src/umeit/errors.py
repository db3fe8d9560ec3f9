class UmeitError(Exception):
    """Base class for library errors."""


class PreconditionError(UmeitError, ValueError):
    """Input rejected before any computation (CLI exit code 2)."""


class NumericalAbort(UmeitError, RuntimeError):
    """A computation started but could not complete (CLI exit code 3).

    ``details`` carries whatever diagnostics the raising site has, e.g. the
    final linear-solver residual or the offending slab index.
    """

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details
