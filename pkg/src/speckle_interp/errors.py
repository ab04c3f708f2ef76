"""Exception types shared across the package."""


class DegenerateInputError(ValueError):
    """A raster has zero variance, so a correlation-type quantity is undefined."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class CalibrationError(RuntimeError):
    """No pad factor in the search range reached the requested sampling factor."""

    def __init__(self, message: str, table: list[tuple[int, float]]):
        super().__init__(message)
        self.table = table


class FormatError(ValueError):
    """Malformed binary file (bad magic, truncated payload, inconsistent header)."""


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    def __init__(self, message: str, expected: int, actual: int):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class DimensionOverflowError(FormatError):
    pass


class NumericalFailure(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch
