"""
Exceptions raised by `mvdrift`.

Every exception carries the process exit code the command line uses for it.
"""
from typing import Optional


class MvDriftError(Exception):
    """Base class of every error raised by the package."""

    exit_code = 1


class ConfigError(MvDriftError, ValueError):
    """Invalid configuration, dimension mismatch or unknown name."""

    exit_code = 2


class UsageError(MvDriftError, ValueError):
    """An operation was called on input it is not defined for."""

    exit_code = 2


class ParseError(ConfigError):
    """
    Malformed input file.

    Attributes
    ----------
    line : int | None
        1-based line number of the offending line, when known.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(MvDriftError, ArithmeticError):
    """
    Non-finite value met during a computation.

    Attributes
    ----------
    step : int | None
        Simulation step index at which it happened.
    time : float | None
        Model time at which it happened.
    """

    exit_code = 3

    def __init__(
        self, message: str, step: Optional[int] = None, time: Optional[float] = None
    ):
        super().__init__(message)
        self.step = step
        self.time = time


class TrainingDivergedError(NumericError):
    """
    The training objective became non-finite.

    Attributes
    ----------
    epoch : int
        Epoch in which the objective diverged.
    report : TrainReport
        Partial report up to the last finite epoch.
    """

    def __init__(self, message: str, epoch: int, step: int, report):
        super().__init__(message, step=step)
        self.epoch = epoch
        self.report = report
