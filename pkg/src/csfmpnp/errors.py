"""Exception hierarchy.

Three families map onto the CLI exit codes: configuration problems,
data/format problems and numerical failures.
"""


class CsfmPnpError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ConfigError(CsfmPnpError, ValueError):
    exit_code = 2


class DataError(CsfmPnpError, ValueError):
    exit_code = 3


class NumericalError(CsfmPnpError, ArithmeticError):
    exit_code = 4


# configuration / precondition errors
class InvalidConfigError(ConfigError):
    pass


class InvalidPilotError(ConfigError):
    pass


class InvalidNoiseError(ConfigError):
    pass


class InvalidRegularizerError(ConfigError):
    pass


class InvalidPriorError(ConfigError):
    pass


class PartitionError(ConfigError):
    pass


class ParseError(ConfigError):
    """Config-file error carrying the offending line number (or None)."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


# data errors
class ShapeError(DataError):
    pass


class OutOfBoundsError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class NoPilotError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class NoSamplesError(DataError):
    pass


class GridMismatchError(DataError):
    pass


class ZeroRangeError(DataError):
    pass


class UndefinedMetricError(DataError):
    pass


class CsfmFormatError(DataError):
    pass


class MagicMismatchError(CsfmFormatError):
    pass


class VersionUnsupportedError(CsfmFormatError):
    pass


class TruncatedFileError(CsfmFormatError):
    pass


# numerical errors
class DegenerateChannelError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class NumericallyDegenerateError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass
