"""
Exception hierarchy for the risk allocation services.
"""
from typing import Optional, Sequence


class RiskAllocError(Exception):
    """Base class for every error raised by riskalloc."""


class DomainError(RiskAllocError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class DistinctRatesRequired(DomainError):
    """Two exponential rates coincide where the Erlang formulas need them distinct."""


class TiedRiskiestBranch(DomainError):
    """The degenerate asymptotic allocation has no unique receiving branch."""


class SingularParameters(DomainError):
    """Model parameters sit on a vanishing denominator of a closed form."""


class BracketError(RiskAllocError):
    """The residual does not change sign over the search interval."""


class ConvergenceError(RiskAllocError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message: str, last_iterate: Optional[Sequence[float]] = None,
                 residual_norm: float = float("nan")):
        super().__init__(message)
        self.last_iterate = None if last_iterate is None else tuple(float(x) for x in last_iterate)
        self.residual_norm = float(residual_norm)

    def __str__(self) -> str:
        base = super().__str__()
        if self.last_iterate is None:
            return base
        return f"{base} (last iterate {list(self.last_iterate)}, residual norm {self.residual_norm:.3e})"


class ConfigError(RiskAllocError):
    """The run configuration cannot be parsed or is inconsistent."""
