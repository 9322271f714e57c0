"""Exception types shared across the package."""


class FitforgeError(Exception):
    """Base class for all fitforge errors."""


class ParseError(FitforgeError):
    """A record line could not be decoded."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ValidationError(FitforgeError):
    """A record, request, or config field violates its constraints."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NotALoopError(FitforgeError):
    """Route does not return to its starting location."""


class InsufficientDataError(FitforgeError):
    """Too few records for the requested operation."""


class DegenerateRouteError(FitforgeError):
    """Route has no usable geometry."""


class InfeasibleClusterCountError(FitforgeError):
    """More clusters requested than distinct signatures available."""


class NotFoundError(FitforgeError):
    """An id is absent from the trained index."""

    def __init__(self, kind: str, key):
        super().__init__(f"unknown {kind}: {key!r}")
        self.kind = kind
        self.key = key


class UndefinedSimilarityError(FitforgeError):
    """Cosine similarity is undefined for a zero vector."""


class BundleVersionError(FitforgeError):
    """Bundle was written with a schema this reader does not support."""

    def __init__(self, found: int, supported: int):
        super().__init__(
            f"bundle schema version {found} is not supported (this reader supports version {supported})"
        )
        self.found = found
        self.supported = supported


class BundleChecksumError(FitforgeError):
    """Bundle file failed integrity verification."""
