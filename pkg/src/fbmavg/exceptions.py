class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class FactorizationError(ArithmeticError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class EmbeddingError(ArithmeticError):
    """Circulant embedding is not nonnegative definite."""


class AdmissibilityError(DomainError):
    """Hölder exponents do not admit a Young/Zähle integral."""


class SolverAbort(ArithmeticError):
    """The particle scheme produced a non-finite or exploding state."""

    def __init__(self, message, step=None, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle


class AssumptionViolation(ValueError):
    """A coefficient model violates one of its declared constants."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ValueError):
    """Invalid run configuration."""
