"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class AnalysisError(ArithmeticError):
    """A statistic is undefined for the data it was given (zero means, no peak, ...)."""


class ConfigurationError(ValueError):
    """A run configuration is invalid or cannot be realised on the requested grid."""


class NegativeContrastWarning(RuntimeWarning):
    """Object-minus-background correlation came out negative; contrast clamped to 0."""
