"""Exception hierarchy for the agcr package."""


class AgcrError(Exception):
    """Base class for all errors raised by agcr."""


class UnsupportedFormatError(AgcrError):
    """Input image format cannot be handled (wrong channel count, depth, ...)."""


class CorruptContainerError(AgcrError):
    """A container file failed structural or consistency validation."""


class MalformedShapeError(AgcrError):
    """A contour is not a simple closed polygon."""


class EncodeError(AgcrError):
    """Internal consistency failure during encoding."""
