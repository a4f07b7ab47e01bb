"""Shared exception types.

The CLI maps these onto exit codes: usage problems exit 1, ``DataError``
subclasses exit 2, ``NumericalError`` exits 3.
"""


class EmorecError(Exception):
    """Base class for all package-specific errors."""


class DataError(EmorecError):
    """Malformed or inconsistent input data (files, manifests, shapes)."""


class FormatError(DataError):
    """A container (WAV, cache, checkpoint) does not parse."""


class UnsupportedFormatError(FormatError):
    """A container parses but uses a codec/field we do not handle."""


class ConfigError(EmorecError):
    """Invalid or internally inconsistent configuration."""


class NumericalError(EmorecError):
    """A numerical check failed (non-finite values, failed gradient check)."""
