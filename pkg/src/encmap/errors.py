"""Exception taxonomy shared by every module in the package.

All library errors derive from :class:`EncmapError` so callers can catch one
base class at API boundaries. The CLI maps subclasses onto exit codes; library
code raises the most specific class that applies and never calls sys.exit.
"""


class EncmapError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(EncmapError):
    """A file lacks the expected magic bytes or carries an unknown version."""


class CorruptionError(EncmapError):
    """A file's declared shape disagrees with its actual payload size."""


class ValidationError(EncmapError):
    """A value breaks a structural invariant (non-finite entries, bad ids, ...)."""


class DegenerateInputError(EncmapError):
    """Input is well formed but mathematically unusable (all-zero matrix, zero row)."""


class ResourceLimitError(EncmapError):
    """A computation exceeds a hard size cap and will not be attempted."""


class NumericalError(EncmapError):
    """A decomposition or iteration produced non-finite or non-convergent results."""


class ShapeError(EncmapError):
    """Operand dimensions do not line up."""


class ParameterError(EncmapError):
    """A parameter value lies outside its documented range."""


class ComparabilityError(EncmapError):
    """Two artifacts cannot be compared (dimension or provenance mismatch)."""


class UnknownIdError(EncmapError):
    """An encoder id is absent from the collection being queried."""


class UndefinedCorrelationError(EncmapError):
    """A correlation is undefined because an argument has zero variance."""
