"""Exception types shared across the package."""


class MorphError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(MorphError, ValueError):
    """A scalar parameter is outside its admissible range."""


class DimensionMismatchError(MorphError, ValueError):
    """Operands disagree on grid dimensions or channel counts."""


class ConfigurationError(MorphError, ValueError):
    """A solver or CLI configuration is inconsistent."""


class TensorFormatError(MorphError, ValueError):
    """Base class for malformed feature-tensor files."""


class TensorMagicError(TensorFormatError):
    """The file does not start with the expected magic bytes."""


class TensorTruncatedError(TensorFormatError):
    """The file length does not match the header-declared payload."""


class TensorValueError(TensorFormatError):
    """The payload contains non-finite values or an invalid header field."""
