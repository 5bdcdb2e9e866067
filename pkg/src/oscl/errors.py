"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid inputs, shapes, axis names or parameters."""


class DomainError(ValueError):
    """A well-formed request that is undefined for the given distribution."""


class NumericalError(ArithmeticError):
    """A density or ratio evaluation hit a zero or non-finite value."""


class PremiseViolation(RuntimeError):
    """A theorem premise does not hold for the requested parameters."""
