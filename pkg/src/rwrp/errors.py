"""Exception hierarchy shared across the package."""


class RwrpError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(RwrpError):
    """Bad input: out-of-range parameter, site outside the box, etc."""


class GuardError(ValidationError):
    """An exhaustive enumeration would exceed the configured guard."""


class SolverError(RwrpError):
    """The iterative solver failed to reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class EstimatorError(RwrpError):
    """A Monte Carlo estimator could not produce a usable estimate."""


class NonConcaveError(RwrpError):
    """Samples of the profile being maximized violate concavity beyond noise."""

    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple
