"""Exception types raised across the package."""


class BandCltError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def to_dict(self):
        return {"type": self.kind, "message": str(self)}


class InvalidSpecError(BandCltError, ValueError):
    """An ensemble, distribution or argument violates its constraints."""

    kind = "invalid-spec"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field

    def to_dict(self):
        out = super().to_dict()
        if self.field is not None:
            out["field"] = self.field
        return out


class NumericInputError(BandCltError, ValueError):
    """Input array contains NaN or infinite values."""

    kind = "numeric-input"


class AccuracyError(BandCltError, ArithmeticError):
    """A quadrature or series failed to reach its tolerance.

    ``diagnostics`` carries whatever trace the failing routine collected
    (partial sums, error estimates, node counts).
    """

    kind = "accuracy"

    def __init__(self, message, estimate=None, diagnostics=None):
        super().__init__(message)
        self.estimate = estimate
        self.diagnostics = diagnostics or {}

    def to_dict(self):
        out = super().to_dict()
        out["estimate"] = self.estimate
        return out


class KernelSingularityError(InvalidSpecError):
    """The two-point kernel was requested too close to its diagonal."""

    kind = "kernel-singularity"


class InsufficientDataError(BandCltError, ValueError):
    kind = "insufficient-data"


class ReplicateFailureError(BandCltError, RuntimeError):
    """Too many Monte Carlo replicates failed."""

    kind = "replicate-failure"

    def __init__(self, message, failures=0):
        super().__init__(message)
        self.failures = failures


class ConfigError(BandCltError, ValueError):
    """Malformed or invalid run configuration."""

    kind = "config"

    def __init__(self, message, field=None, line=None, column=None):
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column

    def to_dict(self):
        out = super().to_dict()
        for key in ("field", "line", "column"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out
