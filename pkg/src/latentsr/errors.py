"""Exception hierarchy shared by every module."""


class LatentSRError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LatentSRError, ValueError):
    """Tensor extents or ranks do not satisfy an operation's contract."""


class ParameterError(LatentSRError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class ConfigError(LatentSRError, ValueError):
    """A key=value configuration file is malformed or has unknown keys."""


class FormatError(LatentSRError, ValueError):
    """A file does not follow the expected byte layout."""


class UnsupportedVersionError(FormatError):
    """An FT32 file carries a version byte this reader does not know."""


class DivergenceError(LatentSRError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, step, loss):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss
