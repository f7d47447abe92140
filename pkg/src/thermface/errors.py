"""Exception hierarchy shared by every pipeline stage."""


class ThermfaceError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ThermfaceError):
    """Bad user input: files, labels, parameters. Maps to CLI exit status 1."""


class NumericalFailure(ThermfaceError):
    """A computation could not produce a usable result. Maps to exit status 2."""


class UnreadableFile(InputError):
    pass


class UnsupportedFormat(InputError):
    pass


class WriteFailure(InputError):
    pass


class InvalidParameter(InputError, ValueError):
    pass


class ParseError(InputError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvalidLabel(InputError, ValueError):
    pass


class ImageTooSmall(InputError, ValueError):
    pass


class DegenerateRadius(NumericalFailure):
    pass


class NonZeroSumMask(InputError, ValueError):
    def __init__(self, block, total):
        super().__init__(f"mask block {block} sums to {total!r}, expected 0")
        self.block = block
        self.total = total


class WrongCount(InputError, ValueError):
    pass


class TooFewSamples(InputError, ValueError):
    pass


class DimensionMismatch(InputError, ValueError):
    pass


class KTooLarge(InputError, ValueError):
    pass


class NonFiniteLoss(NumericalFailure):
    pass


class InvalidK(InputError, ValueError):
    pass


class SizesMismatch(InputError, ValueError):
    pass


class StratificationImpossible(InputError, ValueError):
    pass


class EmptyClassInTraining(InputError, ValueError):
    pass


class VersionMismatch(InputError):
    pass
