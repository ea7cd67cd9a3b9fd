"""Exception hierarchy. Each CLI exit code maps to one branch."""


class ParcelCAError(Exception):
    exit_code = 1


class GeometryError(ParcelCAError, ValueError):
    exit_code = 2


class SchemaError(ParcelCAError, ValueError):
    """Malformed input file; the message names the offending feature or line."""

    exit_code = 2


class DataError(ParcelCAError, ValueError):
    exit_code = 2


class ConfigError(ParcelCAError, ValueError):
    exit_code = 1


class CalibrationError(ParcelCAError):
    exit_code = 2


class StaleCacheError(ParcelCAError):
    exit_code = 3


class CacheFormatError(ParcelCAError):
    exit_code = 2


class MetricError(ParcelCAError, ValueError):
    exit_code = 2


class StateError(ParcelCAError):
    exit_code = 2
