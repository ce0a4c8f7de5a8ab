"""Exception types shared across the package."""


class DivswitchError(Exception):
    """Base class for all package errors."""


class DomainError(DivswitchError):
    """An argument lies outside the mathematical domain of the operation."""


class ConfigError(DivswitchError):
    """A configuration file is malformed; the message names the offending key."""


class GridSizeError(DivswitchError):
    """The truncated lattice would not fit in addressable memory."""


class NumericsError(DivswitchError):
    """A quadrature or integral evaluation failed to converge."""


class NonconvergenceError(DivswitchError):
    """Value iteration hit the iteration cap before reaching tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InvalidPolicyError(DivswitchError):
    """A policy assigns a lump dividend where the surplus is already zero."""


class OutsideBoxWarning(UserWarning):
    """An evaluation point fell outside the truncated grid box."""
