"""Exception hierarchy shared by all squeezemem modules."""


class SqueezeMemError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(SqueezeMemError, ValueError):
    """A physical parameter is outside its allowed domain."""


class AboveThresholdError(ParameterError):
    """OPO pump parameter at or above oscillation threshold."""


class CalibrationError(SqueezeMemError):
    """A calibration target cannot be reached.

    ``target`` names the quantity that could not be matched so callers
    (and the CLI) can report it.
    """

    def __init__(self, message, target=None):
        super().__init__(message)
        self.target = target


class RangeError(SqueezeMemError, ValueError):
    """A frequency, time or index lies outside the supported range."""


class FilterError(SqueezeMemError, ValueError):
    """A transfer function is not a valid passive, symmetric channel."""


class ScheduleError(SqueezeMemError, ValueError):
    """Pulse schedule is inconsistent with the trace geometry."""


class InputError(SqueezeMemError, ValueError):
    """Estimator inputs are inconsistent or insufficient."""


class FormatError(SqueezeMemError):
    """A trace or CSV file does not match the expected layout."""


class ConfigError(SqueezeMemError):
    """Configuration text could not be parsed or validated.

    Carries the offending ``key`` (or ``line``/``column`` for syntax
    errors).
    """

    def __init__(self, message, key=None, line=None, column=None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        elif key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key
        self.line = line
        self.column = column
