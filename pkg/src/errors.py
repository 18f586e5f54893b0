"""
Error types for the DP-DBSCAN pipeline
Each error carries the exit code the command line reports for it
"""


class DpDbscanError(Exception):
    """Base class for every error raised by the package"""
    exit_code = 1


class ParameterError(DpDbscanError, ValueError):
    """Invalid parameter value (privacy budget, radius, histogram mode, ...)"""
    exit_code = 2


class ConfigError(ParameterError):
    """Invalid configuration file or run configuration"""
    exit_code = 2


class DomainError(DpDbscanError, ValueError):
    """Point lies outside the normalized unit cube"""
    exit_code = 3


class DataError(DpDbscanError):
    """Input file missing, malformed or inconsistent"""
    exit_code = 3


class CapacityError(DpDbscanError, RuntimeError):
    """Requested structure is too large to materialize"""
    exit_code = 4


class ResourceError(CapacityError):
    """A random draw asked for an unreasonable amount of work"""
    exit_code = 4
