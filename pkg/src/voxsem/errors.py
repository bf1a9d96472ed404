"""Exception types shared across the package.

Each class marks a distinct failure family so callers (and the CLI exit
code mapping) can tell configuration mistakes apart from numeric
divergence and malformed files.
"""


class VoxsemError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(VoxsemError):
    """An array has the wrong rank, extent, or channel count."""


class ConfigError(VoxsemError):
    """A configuration is inconsistent or fails the shape plan."""


class NumericError(VoxsemError):
    """A computation produced non-finite values or diverged."""


class FormatError(VoxsemError):
    """A serialized file is malformed, truncated, or mislabeled."""


class PlacementError(VoxsemError):
    """The scene generator could not place a requested object."""
