"""Exception hierarchy shared by every stage of the toolkit."""


class DasAuditError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DasAuditError, ValueError):
    """A configuration value is missing, malformed or out of range.

    ``field`` names the offending configuration key when it is known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ParseError(DasAuditError, ValueError):
    """A file could not be parsed. Carries the 1-based line number."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class IntegrityError(DasAuditError):
    """Loaded or constructed data violates a structural invariant."""


class ComparabilityError(DasAuditError, ValueError):
    """Two tabulations (or a plan and a tabulation) cover different blocks."""


class ResourceError(DasAuditError):
    """A requested exhaustive computation exceeds the allowed size."""


class DegenerateGeographyError(DasAuditError):
    """A block carries no smoothed mass for any race with positive prior."""


class UndefinedStatisticError(DasAuditError, ValueError):
    """A statistic was requested over an empty or zero-mass input."""


class ContractError(DasAuditError, ValueError):
    """A caller violated an operation precondition."""


class PlanGenerationError(DasAuditError):
    """No plan met the balance tolerance within the retry budget."""

    def __init__(self, message, best_deviation):
        self.best_deviation = best_deviation
        super().__init__(f"{message} (best deviation achieved: {best_deviation:.6f})")


class ReportError(DasAuditError):
    """A report was requested without all of its required inputs."""


class StageError(DasAuditError):
    """A pipeline stage failed; wraps the underlying cause."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
