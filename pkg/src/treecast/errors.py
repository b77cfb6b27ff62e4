"""Exception types shared across the package."""


class TreecastError(Exception):
    """Base class for all errors raised by this package."""


class PanelFormatError(TreecastError):
    """A panel CSV row is malformed. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class HierarchyError(TreecastError):
    """The parent links do not form a single-rooted tree."""


class DataError(TreecastError):
    """Inputs are structurally valid but unusable (missing months, bad alignment)."""


class ModelIOError(TreecastError):
    """A model file is missing, corrupt, or has an unsupported version."""
