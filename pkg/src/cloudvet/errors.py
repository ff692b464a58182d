"""Exception types shared across the package."""


class CloudVetError(Exception):
    """Base class for all cloudvet-specific errors."""


class ParseError(CloudVetError):
    """A cloud file could not be parsed; the message names the offending line."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyCloudError(CloudVetError):
    """A cloud with zero points was produced or parsed."""


class ManifestError(CloudVetError):
    """A dataset manifest is malformed or inconsistent."""


class DegenerateGeometryError(CloudVetError):
    """The geometry is too degenerate to process (e.g. all points coincident)."""


class DegenerateGraphError(CloudVetError):
    """A neighbor graph has an isolated (zero-degree) node."""


class ModelFormatError(CloudVetError):
    """A serialized model file is malformed, inconsistent, or of an unknown version."""
