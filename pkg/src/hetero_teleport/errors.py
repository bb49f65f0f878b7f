"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """A value violates a documented invariant (bad state, bad parameter, coarse grid)."""


class OutOfDomainError(ValueError):
    """A model is evaluated outside the region where its formula holds."""


class ConfigError(ValueError):
    """A configuration document or override could not be parsed."""
