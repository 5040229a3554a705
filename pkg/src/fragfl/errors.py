"""Exception hierarchy shared across the package."""


class FFLError(Exception):
    """Base class for every error raised by fragfl."""


class ShapeError(FFLError, ValueError):
    """Operands have mismatched lengths or layouts."""


class FormatError(FFLError, ValueError):
    """A byte string or file does not match the expected encoding."""


class DegenerateInputError(FFLError, ValueError):
    """An operation is undefined for the given input (e.g. zero-norm cosine)."""


class DomainError(FFLError, ValueError):
    """An argument is outside the domain of an operation."""


class ConfigError(FFLError, ValueError):
    """Invalid simulation or attack configuration."""


class ProtocolError(FFLError):
    """A fragment-exchange session received an invalid or out-of-order message."""


class DecryptionError(FFLError):
    """A seed ciphertext could not be decrypted or failed its integrity check."""


class TrainingError(FFLError):
    """Local training diverged (non-finite loss)."""


class AggregationError(FFLError):
    """The aggregation weights summed to zero."""


class ReconstructionError(FFLError):
    """A reconstruction attack has no usable signal in the given gradient."""
