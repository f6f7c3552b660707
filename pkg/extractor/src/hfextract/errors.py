"""Error taxonomy for the extraction pipeline."""


class ExtractorError(Exception):
    """Base class for all extraction failures."""


class DataError(ExtractorError):
    """Input data is missing, empty, or too small for the request."""


class ParameterError(ExtractorError):
    """A parameter is outside its documented domain."""
