"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`GrvqError`
and carries an ``exit_code`` that the command line tool returns verbatim.
"""


class GrvqError(Exception):
    exit_code = 1


class ConfigurationError(GrvqError, ValueError):
    exit_code = 3


class ShapeError(GrvqError, ValueError):
    exit_code = 4


class EmptyInputError(GrvqError, ValueError):
    exit_code = 5


class DegenerateInputError(GrvqError, ValueError):
    exit_code = 6


class DomainError(GrvqError, ValueError):
    exit_code = 7


class InsufficientDataError(GrvqError, ValueError):
    exit_code = 8


class CodeIndexError(GrvqError, IndexError):
    exit_code = 9


class FormatError(GrvqError, ValueError):
    exit_code = 10


class VersionError(FormatError):
    exit_code = 11


class TruncationError(FormatError):
    def __init__(self, expected: int, actual: int, what: str = "stream"):
        super().__init__(f"truncated {what}: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual

    exit_code = 12


class EncodingError(GrvqError, ValueError):
    exit_code = 13


class CompatibilityError(GrvqError, ValueError):
    def __init__(self, field: str, model_value, stream_value):
        super().__init__(
            f"model/stream mismatch on {field}: model={model_value!r}, stream={stream_value!r}"
        )
        self.field = field

    exit_code = 14


class WavFormatError(FormatError):
    """Unsupported WAV flavour; ``prop`` names the offending property."""

    def __init__(self, path, prop: str, value, allowed):
        super().__init__(f"{path}: unsupported {prop}={value!r} (allowed: {allowed})")
        self.path = path
        self.prop = prop
        self.value = value

    exit_code = 15


class EmptyCorpusError(GrvqError):
    exit_code = 16


class InsufficientCorpusError(GrvqError):
    exit_code = 17


class CodecIOError(GrvqError, OSError):
    exit_code = 18
