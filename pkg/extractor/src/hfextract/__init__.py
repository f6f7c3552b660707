"""Batch sentence-embedding extraction into the encmap matrix format."""

from .errors import DataError, ExtractorError, ParameterError
from .extract import (
    REPORT_NAME,
    ExtractionJob,
    JobReport,
    SkippedModel,
    WrittenEmbedding,
    extract,
)
from .sentences import read_sentences, sample_sentences

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "ExtractionJob",
    "ExtractorError",
    "JobReport",
    "ParameterError",
    "REPORT_NAME",
    "SkippedModel",
    "WrittenEmbedding",
    "extract",
    "read_sentences",
    "sample_sentences",
]
