"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class EccentricityError(Exception):
    exit_code = 1


class ArgumentError(EccentricityError, ValueError):
    """Invalid argument to a pure function (empty input, bad sizes)."""

    exit_code = 2


class ConfigError(EccentricityError, ValueError):
    exit_code = 2


class ValidationError(EccentricityError, ValueError):
    """Input data violates a schema or domain rule."""

    exit_code = 3


class DegenerateError(EccentricityError):
    """An analysis or test has no usable variation to work with."""

    exit_code = 4
