"""Exception types raised across the package."""


class FogEcgError(Exception):
    """Base class for all package errors."""


class ParameterError(FogEcgError, ValueError):
    pass


class FormatError(FogEcgError, ValueError):
    """A sample file could not be parsed.

    ``line`` is the 1-based line number in the file (header is line 1).
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientData(FogEcgError):
    pass


class NoPlausiblePeaks(FogEcgError):
    pass


class InsufficientBeats(FogEcgError):
    pass


class EmptyPeriod(FogEcgError):
    def __init__(self, period):
        self.period = period
        super().__init__(f"period {period} has no confident beats")


class SequenceGap(FogEcgError):
    def __init__(self, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"sequence gap: expected counter {expected}, got {actual}")


class IncompleteRange(FogEcgError):
    def __init__(self, holes):
        self.holes = list(holes)
        super().__init__(f"missing batch ids: {self.holes}")


class DegenerateSpan(FogEcgError):
    pass


class DivisionByZero(FogEcgError, ZeroDivisionError):
    pass


class SchemaError(FogEcgError, ValueError):
    pass


class EmptyInput(FogEcgError, ValueError):
    pass
