"""Exception types raised across the package."""


class HDTError(Exception):
    """Base class for all package errors."""


class ConfigError(HDTError, ValueError):
    pass


class MissingFile(HDTError, FileNotFoundError):
    pass


class NonNumericCell(HDTError, ValueError):
    def __init__(self, row, col, text=""):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric cell at row {row}, column {col}: {text!r}")


class EmptySeries(HDTError, ValueError):
    pass


class DegenerateChannel(HDTError, ValueError):
    def __init__(self, channel):
        self.channel = channel
        super().__init__(f"channel {channel} has zero variance")


class SeriesTooShort(HDTError, ValueError):
    def __init__(self, n, *needed):
        self.n = n
        self.needed = needed
        super().__init__(f"series of length {n} too short for {needed}")


class LengthTooSmall(HDTError, ValueError):
    pass


class LengthMismatch(HDTError, ValueError):
    pass


class BrokenHermitianSymmetry(HDTError, ValueError):
    pass


class IndexOutOfRange(HDTError, IndexError):
    pass


class LagOutOfRange(HDTError, ValueError):
    pass


class ShapeMismatch(HDTError, ValueError):
    pass


class NonScalarLoss(HDTError, ValueError):
    pass


class DetachedGraph(HDTError, RuntimeError):
    pass


class EmptyDataset(HDTError, ValueError):
    pass


class NonFiniteLoss(HDTError, FloatingPointError):
    pass


class InvalidSpec(HDTError, ValueError):
    pass
