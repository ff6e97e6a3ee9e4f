"""Exception types raised across the package."""


class ModelDomainError(ValueError):
    """An argument lies outside the domain where a model is defined."""


class OutOfRangeError(ModelDomainError):
    """Distance below the validity range of a path loss model."""


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


class FitError(RuntimeError):
    """A fit could not be carried out on the supplied data."""


class InsufficientDataError(FitError):
    pass


class NonIdentifiableError(FitError):
    pass
