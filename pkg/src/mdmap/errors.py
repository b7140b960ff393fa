"""Exception types raised across the package.

Every error that callers may want to catch selectively gets its own class;
all inherit from :class:`MdmapError` so ``except MdmapError`` catches
anything this package raises deliberately.
"""


class MdmapError(Exception):
    """Base class for all package errors."""


class FormatError(MdmapError):
    """A file could not be parsed in any supported raster format."""


class MetadataError(MdmapError):
    """A raster file is readable but lacks required georeferencing metadata."""


class EmptyRasterError(MdmapError):
    """A raster contains zero bands."""


class WriteError(MdmapError):
    """A raster or artifact could not be written to disk."""


class AlignmentError(MdmapError):
    """Rasters cannot be stacked (CRS mismatch or empty grid intersection)."""


class TransportError(MdmapError):
    """An HTTP request failed.

    ``retryable`` distinguishes transient faults (timeouts, 5xx) from
    permanent ones (auth, 4xx).
    """

    def __init__(self, message, retryable=False):
        super().__init__(message)
        self.retryable = retryable


class CatalogParseError(MdmapError):
    """A catalog response was not valid JSON or missed required fields."""


class IntegrityError(MdmapError):
    """Downloaded or ingested data failed a consistency check."""


class GeometryError(MdmapError):
    """A polygon ring is malformed (unclosed or degenerate)."""


class ProjectionError(MdmapError):
    """A coordinate is outside the domain of the local projection."""


class ConfigError(MdmapError):
    """A weights file or config value is incomplete or contradictory."""


class ValidationError(MdmapError):
    """A pipeline config failed validation before any stage ran."""


class LabelError(MdmapError):
    """A class plane contains a label outside the declared label list."""


class DegenerateCurveError(MdmapError):
    """A precision-recall curve cannot be built (no positive labels)."""


class NoSolutionError(MdmapError):
    """No threshold on the curve satisfies the requested objective."""


class RenderError(MdmapError):
    """A map document cannot be rendered (e.g. empty input)."""
