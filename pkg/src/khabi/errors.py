"""Exception hierarchy; the CLI maps these onto exit codes."""
from __future__ import annotations


class KhabiError(Exception):
    """Base class for all library errors."""


class DomainError(KhabiError, ValueError):
    """Input outside the region where an operation is defined."""


class RootIsolationError(KhabiError):
    """Root census could not be certified complete."""


class SignPatternError(KhabiError):
    """Pointwise signs of psi disagree with the isolated zeros."""


class OracleFailure(KhabiError):
    """An independent cross-check exceeded its tolerance."""

    def __init__(self, name: str, residual: float, tol: float):
        super().__init__(f"oracle {name!r} failed: residual {residual:.3e} > tol {tol:.1e}")
        self.name = name
        self.residual = residual
        self.tol = tol


class NonConvergenceError(KhabiError):
    """Iterative numerics ran out of budget. Carries the partial value."""

    def __init__(self, message: str, partial: float | None = None, error: float | None = None):
        super().__init__(message)
        self.partial = partial
        self.error = error
