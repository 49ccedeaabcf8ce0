"""Exception hierarchy shared by all geoprior modules.

Three broad families map onto CLI exit codes: configuration problems (2),
data problems (3) and numeric failures (4).
"""


class GeopriorError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GeopriorError):
    """Invalid configuration values or inconsistent option combinations."""


class InvalidConfig(ConfigError):
    pass


class DataError(GeopriorError):
    """Problems with input data: files, shapes, labels."""


class EmptyInput(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DimensionInconsistent(DataError):
    pass


class ParseError(DataError):
    """File could not be parsed; message carries the offending row/offset."""


class IoError(DataError):
    pass


class UnknownClass(DataError):
    pass


class EmptyClass(DataError):
    pass


class MissingClass(DataError):
    pass


class NoHeadClass(DataError):
    pass


class InsufficientHeadData(DataError):
    pass


class UnmatchedTail(DataError):
    pass


class InsufficientModels(DataError):
    pass


class NumericError(GeopriorError):
    """Numerical failures: divergence, non-finite values, domain violations."""


class NonFinite(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


class ZeroSpectrum(NumericError):
    pass


class OutOfDomain(NumericError):
    pass
