"""Exception hierarchy shared by all possim modules."""


class PossimError(Exception):
    """Base class for library errors."""


class DimensionMismatchError(PossimError, ValueError):
    pass


class EmptyHypothesisError(PossimError, ValueError):
    """The search strategy of a hypothesis found no member."""


class SingularCovarianceError(PossimError, ValueError):
    pass


class DomainError(PossimError, ValueError):
    """A parameter point lies outside the model's domain."""


class ConvergenceError(PossimError, RuntimeError):
    """An iterative solver did not converge."""


class BoundaryMLEError(ConvergenceError):
    """The likelihood is maximized on the boundary of the parameter space."""


class NormalizationError(PossimError, ValueError):
    """A constructed contour cannot attain the value 1."""


class NestingError(PossimError, ValueError):
    """A family of regions is not nested in its level."""


class MultimodalContourError(PossimError, RuntimeError):
    """The contour is not monotone along a probe ray."""


class ConfigError(PossimError, ValueError):
    """A run configuration failed schema validation."""


class FixtureMismatchError(PossimError, ValueError):
    """A fixture does not reproduce its documented summary statistics."""
