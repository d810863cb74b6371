"""Exception types raised across the package."""


class HocforgeError(Exception):
    """Base class for all package errors."""


class DegenerateTransform(HocforgeError):
    """Rotation/scaling produced a sprite smaller than 1x1."""


class OutOfBounds(HocforgeError):
    """A rectangle or placement does not fit inside its target image."""


class DegenerateInstance(HocforgeError):
    """Instance has an empty full mask; occlusion is undefined."""


class EmptyScene(HocforgeError):
    """Scene occupancy is empty; no bounding box exists."""


class ShapeMismatch(HocforgeError):
    """Two images that must share dimensions do not."""


class NumericalFailure(HocforgeError):
    """Cholesky factorization failed even after jitter escalation."""


class ObjectiveError(HocforgeError):
    """The black-box objective returned a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ProtocolError(HocforgeError):
    """Malformed or out-of-range response from an external scorer."""


class ScorerTimeout(HocforgeError):
    """External scorer did not answer within the deadline."""


class NoForeground(HocforgeError):
    """Frame contains no pixel sufficiently far from the background color."""


class DegenerateConfig(HocforgeError):
    """Configuration admits no feasible placement on the canvas."""


class ConfigError(HocforgeError):
    """Invalid or unknown configuration field."""
