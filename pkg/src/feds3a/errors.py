"""Exception hierarchy shared by every module."""


class FedS3AError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FedS3AError, ValueError):
    """Inconsistent model, data or experiment configuration."""


class ValidationError(ConfigurationError):
    """An experiment config field violates its declared bound."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class InputError(FedS3AError, ValueError):
    """Malformed arguments to a pure function."""


class NumericError(FedS3AError, ArithmeticError):
    """A NaN or infinity appeared where only finite values are allowed."""


class SchemaError(InputError):
    """CSV header does not match the configured schema."""


class PartitionError(FedS3AError, ValueError):
    """A partition quota cannot be satisfied by the available data."""


class ProtocolError(FedS3AError, RuntimeError):
    """The event loop reached an impossible or stuck state."""


class VersionError(FedS3AError, ValueError):
    """Model version bookkeeping is inconsistent (negative gap, length mismatch)."""


class StaleBaseError(VersionError):
    """A sparse delta references a base version no longer in the cache."""


class CorruptionError(FedS3AError, ValueError):
    """Checksum mismatch while decoding a transported model."""
