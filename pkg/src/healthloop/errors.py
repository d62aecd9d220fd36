"""Domain error types shared across the package."""


class HealthLoopError(Exception):
    """Base class for all domain errors."""


class ValidationError(HealthLoopError):
    """Malformed value within a single record or argument."""


class CatalogError(HealthLoopError):
    """Resource catalog or environment file cannot be used at all."""


class ParameterConflictError(HealthLoopError):
    """Two sources at the same cascade layer disagree on one parameter."""


class ConfigError(HealthLoopError):
    """Experiment configuration is structurally invalid."""
