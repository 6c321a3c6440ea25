"""Exception types shared across the package."""


class RwreError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RwreError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(RwreError, ValueError):
    """A config file or descriptor string cannot be parsed or validated."""


class InsufficientDataError(RwreError):
    """Too few observations to compute the requested statistic."""


class DegenerateDataError(RwreError):
    """Input data is constant or otherwise unusable for the requested fit."""


class DataQualityError(RwreError):
    """Upstream numerical results are too unreliable to aggregate."""
