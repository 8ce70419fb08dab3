"""Exception hierarchy shared by the solver modules."""

from __future__ import annotations


class SolverError(RuntimeError):
    """Base class for numerical failures."""


class ProxSolverError(SolverError):
    """Inner prox iteration did not converge."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class ConjugateOverflowError(SolverError):
    """Legendre box expansion ran away (integrand not superlinear enough)."""


class BlowUpError(SolverError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message, step=None, path=None):
        super().__init__(message)
        self.step = step
        self.path = path


class NonContractionError(SolverError):
    """Picard iterates stopped contracting."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MaxIterationsError(SolverError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class GuardViolation(ValueError):
    """Time step exceeds the explicit-drift stability guard."""


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ResourceGuardError(RuntimeError):
    """Requested problem size exceeds the desk-scale limits."""
