"""Exception hierarchy shared by the simulator modules and the command line."""


class VortexThermalError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ConfigError(VortexThermalError):
    """Invalid, missing or unreadable experiment configuration."""

    exit_code = 2


class SimulationError(VortexThermalError):
    """Numerical or physical failure while simulating or analysing."""

    exit_code = 3


class ParameterError(SimulationError, ValueError):
    """A physical parameter is outside its valid range (e.g. alpha <= 0)."""


class GridError(SimulationError):
    """The sampling grid cannot represent the requested field."""


class GridTruncationError(GridError):
    """The window cuts off too much of a mode's intensity."""


class GridResolutionError(GridError):
    """The grid is too coarse for a waist or aperture."""


class DimensionError(SimulationError, ValueError):
    """Grids or OAM windows of two operands do not match."""


class ModeRangeError(SimulationError, ValueError):
    """An OAM index or mask shift lies outside the truncated window."""


class FitError(SimulationError):
    """The thermal fit cannot be performed on the given data."""


class EmptyCountsError(FitError):
    """All counts are zero."""


class SupportError(SimulationError, ValueError):
    """The reference distribution vanishes where the data does not."""
