"""Exception types shared across the package."""


class TopoembedError(Exception):
    """Base class for errors raised by this package."""


class InputFormatError(TopoembedError):
    """A data file (edge list, matrix, point cloud, diagram) is malformed."""


class ConfigError(TopoembedError):
    """A run configuration is invalid."""


class ConvergenceError(TopoembedError):
    """An iterative solver failed to reach the requested tolerance."""


class TrainingAbort(TopoembedError):
    """Training was stopped because the optimisation state became unusable."""
