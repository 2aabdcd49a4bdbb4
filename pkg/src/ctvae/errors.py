"""Exception hierarchy shared across the package."""


class CtvaeError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(CtvaeError):
    """Schema file is malformed or a CSV header does not match the schema."""


class ParseError(CtvaeError):
    """A cell or field could not be parsed; message carries the location."""


class ValidationError(CtvaeError):
    """Structurally valid input that violates a domain constraint."""


class EncodingError(CtvaeError):
    """A value cannot be encoded by a fitted transform (e.g. unseen category)."""


class ContractError(CtvaeError):
    """Caller broke an internal interface contract (shape/layout mismatch)."""


class NumericError(CtvaeError):
    """A computation produced non-finite values."""


class TrainingError(CtvaeError):
    """Training failed (divergence, non-finite gradient)."""


class ModelVersionError(CtvaeError):
    """Model file was written by an unsupported format version."""


class ModelCorruptionError(CtvaeError):
    """Model file failed magic-byte or checksum validation."""


class ExperimentError(CtvaeError):
    """A pipeline stage failed; message names the stage and the cause."""
