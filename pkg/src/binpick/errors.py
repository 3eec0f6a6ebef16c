"""Exception types shared across the pipeline."""


class ConfigError(ValueError):
    """Configuration is malformed, inconsistent, or missing required calibration."""


class InputError(ValueError):
    """An input file (image, cloud, scene, report) is malformed or unreadable."""


class EmptyClusterError(ValueError):
    """A mask projected onto the cloud selected no valid depth points."""


class InsufficientNeighborsError(ValueError):
    """A neighborhood query returned too few points for the requested fit."""


class DegenerateNeighborhoodError(ValueError):
    """Neighborhood points are collinear (or coincident); no surface normal exists."""
