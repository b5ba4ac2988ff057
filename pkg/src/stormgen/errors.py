"""Exception types shared across the package."""


class StormgenError(Exception):
    """Base class for stormgen errors."""


class ConfigError(StormgenError):
    """Invalid or inconsistent run configuration."""


class DataError(StormgenError):
    """Malformed, missing, or unusable input data."""


class ConvergenceError(StormgenError):
    """An optimization failed to converge.

    Carries the best iterate found so the caller can inspect or reuse it.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}
