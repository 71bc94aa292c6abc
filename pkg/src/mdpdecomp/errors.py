"""Exception types shared across the package."""


class MDPError(Exception):
    """Base class for all package errors."""


class ParseError(MDPError):
    """A mesh, config or dataset file could not be parsed."""


class TopologyError(MDPError):
    """A mesh is not a closed, consistently oriented surface."""

    def __init__(self, message, boundary_edges=0):
        super().__init__(message)
        self.boundary_edges = boundary_edges


class DegenerateCut(MDPError):
    """The cross-section of a clip could not be triangulated.

    ``loop`` holds the 3D points of the offending boundary loop.
    """

    def __init__(self, message, loop=None):
        super().__init__(message)
        self.loop = loop


class NoFeasibleStart(MDPError):
    """No candidate plane passed the criteria at the first stage.

    The single-part fallback result is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DimensionMismatch(MDPError, ValueError):
    pass


class LengthMismatch(MDPError, ValueError):
    pass


class DivergenceError(MDPError):
    """Training loss became non-finite."""


class ConfigError(MDPError, ValueError):
    pass


class DatasetError(MDPError, ValueError):
    """A ranked-list dataset is malformed or does not fit a model."""
