"""Exception hierarchy shared across the toolkit.

Exit codes used by the CLI: 2 usage error, 3 input format error,
4 numeric failure.
"""


class ToolkitError(Exception):
    exit_code = 3


class UsageError(ToolkitError):
    exit_code = 2


class FormatError(ToolkitError):
    exit_code = 3


class NumericError(ToolkitError):
    exit_code = 4


# --- JPEG bitstream ---

class MissingMarker(FormatError):
    pass


class UnsupportedProcess(FormatError):
    pass


class UnsupportedSampling(FormatError):
    pass


class CorruptEntropyStream(FormatError):
    pass


class RangeOverflow(NumericError):
    pass


# --- block DCT / pixel pipeline ---

class WrongColorspace(UsageError):
    pass


class QfOutOfRange(UsageError):
    pass


class OddDims(UsageError):
    pass


class ShiftOutOfRange(UsageError):
    pass


class BadDims(UsageError):
    pass


# --- autodiff ---

class ShapeMismatch(UsageError):
    pass


class NonScalarLoss(UsageError):
    pass


class StateShapeMismatch(UsageError):
    pass


# --- network ---

class DimMismatch(UsageError):
    pass


class DimNotDivisibleByWindow(UsageError):
    pass


class ChannelNotDivisibleByHead(UsageError):
    pass


class ConfigMismatch(UsageError):
    pass


# --- training ---

class StepOutOfRange(UsageError):
    pass


class ImageTooSmall(UsageError):
    pass


class NonFiniteLoss(NumericError):
    pass


class BadMagic(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


# --- metrics / eval ---

class MissingPair(FormatError):
    pass


class BinMismatch(UsageError):
    pass


class TooSmall(UsageError):
    pass


class EmptyInput(UsageError):
    pass
