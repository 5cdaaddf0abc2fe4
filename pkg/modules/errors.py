# modules/errors.py
"""
Domain exceptions. Each class carries the exit code the CLI maps it to.
"""

from constants import EXIT_CERTIFICATION, EXIT_RESOURCE, EXIT_USAGE


class ZetaError(Exception):
    exit_code = EXIT_USAGE


class ProblemError(ZetaError):
    """Malformed or semantically invalid problem description."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"строка {line}: {message}"
        super().__init__(message)


class CertificationError(ZetaError):
    exit_code = EXIT_CERTIFICATION

    def __init__(self, message: str, chart: str | None = None):
        self.chart = chart
        if chart is not None:
            message = f"{message} (карта {chart})"
        super().__init__(message)


class DegeneracyError(CertificationError):
    """A Newton edge or a strict transform the local monomialization cannot handle."""

    def __init__(self, message: str, edge=None, chart: str | None = None):
        self.edge = edge
        if edge is not None:
            message = f"{message}; ребро {edge}"
        super().__init__(message, chart)


class ResourceError(ZetaError):
    exit_code = EXIT_RESOURCE


class AccuracyError(ZetaError):
    exit_code = EXIT_RESOURCE

    def __init__(self, message: str, estimate: float):
        self.estimate = estimate
        super().__init__(f"{message} (достигнутая оценка погрешности {estimate:.3e})")


class PoleProximityError(ZetaError):
    exit_code = EXIT_RESOURCE

    def __init__(self, message: str, location):
        self.location = location
        super().__init__(message)


class RadiusError(ZetaError):
    exit_code = EXIT_RESOURCE

    def __init__(self, message: str, location):
        self.location = location
        super().__init__(message)
