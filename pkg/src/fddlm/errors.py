"""Exception types shared across the package."""


class DomainViolationError(ValueError):
    """Geometry leaves the region where an operation is defined."""


class IncompatibleConfigError(ValueError):
    """Element family, coupling form, or solver options do not fit together."""


class FactorizationError(RuntimeError):
    """A direct factorization failed or produced an unusable factor."""


class NoConvergenceError(RuntimeError):
    """Iterative solve hit its iteration limit; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
