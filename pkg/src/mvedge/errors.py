"""Exception types raised by the domain operations."""


class MVEdgeError(Exception):
    """Base class for all domain errors raised by this package."""


class DimensionMismatch(MVEdgeError):
    """Operands have incompatible shapes or view dimensions."""


class DuplicateNode(MVEdgeError):
    """A multi-view instance carries two views for the same node."""


class EmptyCollection(MVEdgeError):
    """A multi-view instance carries no views."""


class BinCountMismatch(MVEdgeError):
    """Histogram operands use different bin counts."""


class EmptyInput(MVEdgeError):
    """An aggregation received an empty sequence."""


class UnsupportedDimensions(MVEdgeError):
    """A model cannot process the given view."""


class NoAvailableNodes(MVEdgeError):
    """Every source node is unavailable for the current round."""


class MissingFile(MVEdgeError):
    """A manifest, raster, or sidecar file does not exist."""


class MalformedRaster(MVEdgeError):
    """A raster file is not valid binary PPM (P6, 8-bit)."""


class SidecarShapeMismatch(MVEdgeError):
    """An embedding sidecar disagrees with its instance's view list."""


class NotEnoughViews(MVEdgeError):
    """An instance has fewer views than a sampling request needs."""


class InvalidCounts(MVEdgeError):
    """Transmission-gain counts are out of range."""


class ConfigError(MVEdgeError):
    """An experiment configuration is invalid."""
