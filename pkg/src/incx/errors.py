"""Exception hierarchy shared across the engine.

Every error raised by incx derives from :class:`IncxError`, so callers can
catch one type at the boundary (the CLI maps subtrees to exit codes).
"""

from __future__ import annotations


class IncxError(Exception):
    """Base class for all incx errors."""


class ConfigError(IncxError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class InputOutputError(IncxError):
    """Unreadable frames, malformed artifact files, etc. (CLI exit code 4)."""


# -- geometry ---------------------------------------------------------------

class DegenerateBox(IncxError):
    """A bounding box with zero width or height where extent is required."""


# -- saliency fields --------------------------------------------------------

class ZeroMass(IncxError):
    """A saliency field with no mass cannot be normalized or scored."""


class MassLost(IncxError):
    """A warp moved essentially all saliency mass out of the frame."""

    def __init__(self, remaining_mass: float, floor: float):
        super().__init__(
            f"pre-renormalization mass {remaining_mass:.3e} fell below "
            f"the floor {floor:.3e}; the object left the frame"
        )
        self.remaining_mass = remaining_mass
        self.floor = floor


# -- detectors --------------------------------------------------------------

class DetectorUnavailable(IncxError):
    """The (remote) detector process failed or stopped responding (exit 3)."""


class ProtocolError(IncxError):
    """A malformed or out-of-order message on the detector wire protocol."""


class InvalidSpec(ConfigError):
    """A synthetic detector was configured with impossible parameters."""


# -- explanation search -----------------------------------------------------

class NoSufficientLevel(IncxError):
    """No level of the search grid yields a sufficient explanation."""


# -- metrics ----------------------------------------------------------------

class ZeroFullImageScore(IncxError):
    """Insertion/deletion normalization is undefined: full-image score is 0."""


class ConstantField(IncxError):
    """Pearson correlation is undefined for a constant-valued field."""


class FieldMismatch(IncxError):
    """Two fields/masks that must share dimensions do not."""


# -- pipeline ---------------------------------------------------------------

class FrameOrderError(IncxError):
    """Frames must be presented with consecutive indices, in order."""
