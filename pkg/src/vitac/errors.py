"""Exception types shared across the toolkit."""


class VitacError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidInputError(VitacError, ValueError):
    """An argument violates a documented precondition."""


class SaturatedReadingError(VitacError):
    """Reading lies in the saturation plateau; the inverse is not unique."""


class InsufficientDataError(VitacError):
    """Too few usable samples to fit a response curve."""


class DegenerateFitError(VitacError):
    """Fit is ill-posed (e.g. all forces identical, non-positive slope)."""


class CalibrationMismatchError(VitacError):
    """Calibration pad id does not match the frame pad id."""


class StreamStarvedError(VitacError):
    """A configured stream contributed no samples over the whole window."""


class EpisodeLoadError(VitacError):
    """Base class for episode container read failures."""


class EpisodeVersionError(EpisodeLoadError):
    """Bad magic or unsupported container version."""


class TruncatedFileError(EpisodeLoadError):
    """File ends in the middle of a record."""


class ChecksumError(EpisodeLoadError):
    """Record payload does not match its CRC32."""


class DegenerateWeightsError(VitacError):
    """No finite distance values; particle weights cannot be normalized."""
