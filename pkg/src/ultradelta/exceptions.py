"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class UltraDeltaError(Exception):
    exit_code = 1


class UsageError(UltraDeltaError, ValueError):
    """Invalid parameter, config value or precondition."""

    exit_code = 2


class FormatError(UltraDeltaError):
    """A file or payload could not be parsed."""

    exit_code = 3


class MalformedHeaderError(FormatError):
    pass


class ChecksumMismatchError(FormatError):
    pass


class ShapeOverflowError(FormatError):
    pass


class TruncatedStreamError(FormatError):
    pass


class RunOverflowError(FormatError):
    pass


class DecodeError(FormatError):
    pass


class FingerprintMismatchError(UltraDeltaError):
    exit_code = 3


class ShapeMismatchError(UsageError):
    pass


class MissingLayerError(UsageError):
    pass


class VerificationError(UltraDeltaError):
    exit_code = 4
