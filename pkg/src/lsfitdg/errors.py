"""Exception types shared across the package."""


class MeshError(Exception):
    """Base class for mesh construction and validation failures."""


class MeshFormatError(MeshError):
    """Raised when a mesh file cannot be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshValidationError(MeshError):
    """Raised when mesh data is syntactically fine but geometrically invalid."""


class ConfigError(Exception):
    """Raised on invalid run configuration; carries the offending key."""

    def __init__(self, message, key=None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key


class SolverError(Exception):
    """Raised when a linear solve fails its factorization or residual contract."""


class StagnationError(Exception):
    """Raised when the sensitivity field vanishes and the descent direction is undefined."""
