"""Exception hierarchy shared across the package."""


class KpiError(Exception):
    """Base class for every error raised by kpidnn."""


class DataError(KpiError):
    """Input data does not satisfy a documented contract."""


class OutOfRange(DataError):
    pass


class MissingData(DataError):
    pass


class LengthError(DataError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class ParamError(KpiError, ValueError):
    pass


class ConfigError(ParamError):
    pass


class UnsupportedFeature(ParamError):
    pass


class EmptyClass(DataError):
    pass


class BatchTooSmall(DataError):
    pass


class TooFewPoints(DataError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GapError(ParseError):
    pass


class RowLengthError(ParseError):
    pass


class LabelError(ParseError):
    pass


class RangeError(ParseError):
    pass


class SpecError(ParamError):
    pass


class ReportConsistencyError(KpiError):
    pass


class SingularFitWarning(UserWarning):
    """Polynomial fit was rank-deficient and fell back to a lower degree."""
