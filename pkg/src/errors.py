# src/errors.py - Exception hierarchy shared by all modules
#
# Every error carries a category and the process exit code main.py uses for it.


class DPIADMMError(Exception):
    """Base class for all errors raised by this package."""

    category = "internal"
    exit_code = 1


class UsageError(DPIADMMError, ValueError):
    """Caller passed arguments that violate an operation's preconditions."""

    category = "usage"
    exit_code = 2


class ConfigError(UsageError):
    """Experiment config file could not be parsed or validated."""

    category = "config"

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        location = []
        if key is not None:
            location.append(f"key '{key}'")
        if line is not None:
            location.append(f"line {line}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class DataFormatError(DPIADMMError, ValueError):
    """A dataset file is malformed."""

    category = "data"
    exit_code = 3

    def __init__(self, message: str, offset: int | None = None, source: str | None = None):
        self.offset = offset
        self.source = source
        if offset is not None:
            message = f"{message} at byte offset {offset}"
        if source is not None:
            message = f"{source}: {message}"
        super().__init__(message)


class DivergenceError(DPIADMMError, FloatingPointError):
    """A NaN or Inf appeared in an iterate."""

    category = "numerical"
    exit_code = 4

    def __init__(self, message: str, t: int, e: int | None = None, p: int | None = None):
        self.t = t
        self.e = e
        self.p = p
        super().__init__(f"{message} (t={t}, e={e}, p={p})")


class SolverError(DPIADMMError, RuntimeError):
    """An iterative solver hit its iteration cap."""

    category = "numerical"
    exit_code = 4

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual={residual:.3e})")


class CheckFailedError(DPIADMMError):
    """A bound check or privacy audit did not pass."""

    category = "check"
    exit_code = 5
