"""
errors.py - exception hierarchy shared by every nv_deer module.

Each error carries the process exit code the CLI maps it to:
2 for configuration problems, 3 for numerical failures, 4 for bad input data.
"""

from typing import Any, List, Optional


class NVDeerError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 1


# -- configuration -------------------------------------------------------------


class ConfigError(NVDeerError):
    exit_code = 2


class ParseError(ConfigError, ValueError):
    """A config document could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ValidationError(ConfigError, ValueError):
    """One or more invariants of a config are violated; all of them are listed."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


class BadTiming(ConfigError, ValueError):
    pass


class EnvMismatch(ConfigError, ValueError):
    pass


# -- numerics ------------------------------------------------------------------


class NumericError(NVDeerError):
    exit_code = 3


class ApproximationDomain(NumericError, ValueError):
    pass


class NonUnitary(NumericError, ValueError):
    pass


class NoConvergence(NumericError):
    """The solver stopped without meeting its tolerances.

    The best parameters found so far are available on ``report``.
    """

    def __init__(self, message: str, report: Any = None):
        self.report = report
        super().__init__(message)


class SingularNormalEquations(NumericError):
    pass


class BadInit(NumericError, ValueError):
    pass


class DivisionDegenerate(NumericError, ZeroDivisionError):
    pass


class DegenerateX(NumericError, ValueError):
    pass


class PhaseUnwrapAmbiguous(NumericError):
    pass


class ZeroField(NumericError, ValueError):
    pass


class DegenerateGeometry(NumericError, ValueError):
    pass


class ScanError(NumericError):
    """A scan point failed; wraps the original error and keeps its exit code."""

    def __init__(self, scan_value: float, cause: NVDeerError):
        self.scan_value = scan_value
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", NumericError.exit_code)
        super().__init__(f"scan value {scan_value!r}: {cause}")


# -- input data ----------------------------------------------------------------


class InputDataError(NVDeerError):
    exit_code = 4


class LengthMismatch(InputDataError, ValueError):
    pass


class NonMonotoneScan(InputDataError, ValueError):
    pass


__all__ = [
    "NVDeerError",
    "ConfigError",
    "ParseError",
    "ValidationError",
    "BadTiming",
    "EnvMismatch",
    "NumericError",
    "ApproximationDomain",
    "NonUnitary",
    "NoConvergence",
    "SingularNormalEquations",
    "BadInit",
    "DivisionDegenerate",
    "DegenerateX",
    "PhaseUnwrapAmbiguous",
    "ZeroField",
    "DegenerateGeometry",
    "ScanError",
    "InputDataError",
    "LengthMismatch",
    "NonMonotoneScan",
]
