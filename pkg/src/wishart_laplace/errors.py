"""Exception and warning types.

Input problems (bad files, malformed matrices, violated parameter
constraints) derive from :class:`InputError`; failures that depend on where
in the parameter/argument space an evaluation lands derive from
:class:`DomainError`. The CLI maps the two families to different exit codes.
"""

from __future__ import annotations


class WishartError(Exception):
    """Base class for all package errors."""


class InputError(WishartError, ValueError):
    """Malformed or inadmissible input."""


class DomainError(WishartError, ArithmeticError):
    """The requested evaluation falls outside the domain of a method."""


class InvalidModel(InputError):
    pass


class NotPositiveSemidefinite(DomainError):
    def __init__(self, message: str, min_eigenvalue: float | None = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NotPositiveDefinite(InputError):
    pass


class Singular(DomainError):
    def __init__(self, message: str, t: float | None = None):
        if t is not None:
            message = f"{message} (t={t:g})"
        super().__init__(message)
        self.t = t


class IllConditioned(DomainError):
    def __init__(self, message: str, condition_estimate: float):
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = condition_estimate


class MatrixOverflow(DomainError, OverflowError):
    pass


class NumericalBreakdown(DomainError):
    def __init__(self, message: str, stage: str, step: int | None = None):
        where = stage if step is None else f"{stage}, step {step}"
        super().__init__(f"{message} [{where}]")
        self.stage = stage
        self.step = step


class PreconditionFailed(DomainError):
    def __init__(self, message: str, residuals: dict[str, float] | None = None):
        if residuals:
            detail = ", ".join(f"{k}={v:.3e}" for k, v in residuals.items())
            message = f"{message} ({detail})"
        super().__init__(message)
        self.residuals = dict(residuals or {})


class CommutationUnsatisfiable(InputError):
    pass


class NoStabilizingSolution(DomainError):
    pass


class DampingInvalid(DomainError):
    def __init__(self, message: str, damping: float):
        super().__init__(message)
        self.damping = damping


class BranchError(DomainError):
    pass


class HypothesisWarning(UserWarning):
    """Evaluation outside the hypotheses under which a formula is proven."""


class StabilityWarning(UserWarning):
    """Mean-reversion matrix is not stable."""


class AccuracyWarning(UserWarning):
    """A quadrature or integration error estimate exceeds its target."""


class BranchWarning(UserWarning):
    """A logarithm phase moved by an ambiguous amount between grid nodes."""
