"""Exception types shared across the package.

Plain ``ValueError`` is used for scalar domain violations (probabilities
outside (0,1), bad clonality signals, empty data); the classes here cover
errors that callers routinely need to catch and report separately.
"""


class ClonalityError(Exception):
    """Base class for package-specific errors."""


class CatalogMissError(ClonalityError):
    """A mutation refers to a marker that is not in the catalog."""

    def __init__(self, marker: str):
        super().__init__(f"marker not in catalog: {marker!r}")
        self.marker = marker


class UnknownTumorError(ClonalityError):
    """A requested tumor id does not appear in the case file."""

    def __init__(self, tumor_id: str):
        super().__init__(f"unknown tumor id: {tumor_id!r}")
        self.tumor_id = tumor_id


class FileFormatError(ClonalityError):
    """A TSV input failed to parse; carries the offending line number."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
