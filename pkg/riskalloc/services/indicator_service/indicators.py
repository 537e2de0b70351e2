"""
Monte Carlo estimation of the mono-period risk indicators.

For an allocation (u_1, .., u_d) of the group capital u and S = sum X_k:

    I     = sum_k E[g(u_k - X_k) 1{X_k > u_k} 1{S <= u}]
    J     = sum_k E[g(u_k - X_k) 1{X_k > u_k} 1{S >= u}]
    I_loc = sum_k E[g(u_k - X_k) 1{X_k > u_k}]

The optimality conditions compare, across branches, the expectations
E[-g'(u_i - X_i) 1{X_i > u_i} 1{S <= u}] (lower side, for I) or with
1{S >= u} (upper side, for J). For g = |x| they are plain probabilities.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from riskalloc.errors import DomainError
from riskalloc.services.distribution_service.joint_models import JointModel
from riskalloc.services.indicator_service.penalties import Penalty
from riskalloc.services.indicator_service.streams import Moments, map_chunks, reduce_moments

logger = logging.getLogger(__name__)

INDICATOR_I = "I"
INDICATOR_J = "J"
INDICATOR_I_LOC = "I_loc"
INDICATORS = (INDICATOR_I, INDICATOR_J, INDICATOR_I_LOC)

SIDE_LOWER = "lower"
SIDE_UPPER = "upper"
SIDES = (SIDE_LOWER, SIDE_UPPER)


@dataclass(frozen=True)
class Allocation:
    """Nonnegative branch capitals that exhaust the group capital."""

    capitals: Tuple[float, ...]
    total: float

    def __post_init__(self):
        capitals = tuple(float(c) for c in self.capitals)
        total = float(self.total)
        if not capitals:
            raise DomainError("allocation needs at least one branch")
        if not math.isfinite(total) or total < 0.0:
            raise DomainError(f"total capital must be nonnegative, got {total}")
        if any(not math.isfinite(c) or c < 0.0 for c in capitals):
            raise DomainError(f"capitals must be nonnegative, got {list(capitals)}")
        if not math.isclose(math.fsum(capitals), total, rel_tol=1e-9, abs_tol=0.0):
            raise DomainError(f"capitals {list(capitals)} do not sum to {total}")
        object.__setattr__(self, "capitals", capitals)
        object.__setattr__(self, "total", total)

    @classmethod
    def from_fractions(cls, fractions: Sequence[float], total: float) -> "Allocation":
        """Scale simplex fractions by the group capital."""
        alpha = np.asarray(fractions, dtype=float)
        if np.any(alpha < 0.0) or alpha.sum() <= 0.0:
            raise DomainError(f"fractions must be nonnegative with positive sum, got {list(alpha)}")
        alpha = alpha / alpha.sum()
        return cls(tuple(float(a) * float(total) for a in alpha), total)

    @property
    def dimension(self) -> int:
        return len(self.capitals)

    @property
    def fractions(self) -> np.ndarray:
        if self.total == 0.0:
            return np.full(self.dimension, 1.0 / self.dimension)
        return np.asarray(self.capitals) / self.total

    def as_array(self) -> np.ndarray:
        return np.asarray(self.capitals, dtype=float)


@dataclass(frozen=True)
class IndicatorEstimate:
    value: float
    std_error: float
    n: int
    seed: int


@dataclass(frozen=True)
class StationarityCertificate:
    """Pairwise equality test of the optimality-condition expectations."""

    indicator: str
    side: str
    estimates: Tuple[IndicatorEstimate, ...]
    max_z: float
    sigmas: float

    @property
    def passed(self) -> bool:
        return self.max_z <= self.sigmas


def _check(model: JointModel, alloc: Allocation, n: int):
    if alloc.dimension != model.dimension:
        raise DomainError(f"allocation has {alloc.dimension} branches, model has {model.dimension}")
    if int(n) < 1:
        raise DomainError(f"sample count must be at least 1, got {n}")


def _side_for(indicator: str) -> str:
    if indicator == INDICATOR_I:
        return SIDE_LOWER
    if indicator == INDICATOR_J:
        return SIDE_UPPER
    raise DomainError(f"stationarity is defined for I or J, got {indicator!r}")


def severity_samples(losses: np.ndarray, capitals: np.ndarray, penalty: Penalty) -> np.ndarray:
    """Per-sample sum over branches of g(u_k - X_k) on ruined branches."""
    return penalty.cost(capitals - losses).sum(axis=1)


def indicator_samples(losses: np.ndarray, capitals: np.ndarray, total: float,
                      indicator: str, penalty: Penalty) -> np.ndarray:
    severity = severity_samples(losses, capitals, penalty)
    if indicator == INDICATOR_I_LOC:
        return severity
    aggregate = losses.sum(axis=1)
    if indicator == INDICATOR_I:
        return np.where(aggregate <= total, severity, 0.0)
    if indicator == INDICATOR_J:
        return np.where(aggregate >= total, severity, 0.0)
    raise DomainError(f"unknown indicator {indicator!r}; expected one of {INDICATORS}")


def condition_samples(losses: np.ndarray, capitals: np.ndarray, total: float,
                      side: str, penalty: Penalty) -> np.ndarray:
    """Per-sample optimality-condition terms, one column per branch."""
    weight = penalty.marginal_cost(capitals - losses)
    aggregate = losses.sum(axis=1)
    if side == SIDE_LOWER:
        keep = aggregate <= total
    elif side == SIDE_UPPER:
        keep = aggregate >= total
    else:
        raise DomainError(f"unknown side {side!r}; expected one of {SIDES}")
    return np.where(keep[:, None], weight, 0.0)


def _estimate(model: JointModel, n: int, seed: int, per_sample) -> IndicatorEstimate:
    moments = reduce_moments(map_chunks(model, n, seed, lambda losses: Moments.of(per_sample(losses))))
    return IndicatorEstimate(float(moments.mean), float(moments.std_error), int(n), int(seed))


def estimate_indicator(model: JointModel, alloc: Allocation, indicator: str,
                       penalty: Optional[Penalty] = None, n: int = 1_000_000,
                       seed: int = 0) -> IndicatorEstimate:
    """
    Sample-mean estimate of I, J or I_loc.

    Args:
        model: joint loss model
        alloc: allocation to evaluate
        indicator: one of "I", "J", "I_loc"
        penalty: branch penalty, |x| by default
        n: number of loss vectors
        seed: stream seed

    Returns:
        IndicatorEstimate, bitwise reproducible for fixed (model, alloc, penalty, n, seed).
    """
    _check(model, alloc, n)
    if indicator not in INDICATORS:
        raise DomainError(f"unknown indicator {indicator!r}; expected one of {INDICATORS}")
    penalty = penalty or Penalty.absolute()
    capitals = alloc.as_array()
    estimate = _estimate(model, n, seed,
                         lambda losses: indicator_samples(losses, capitals, alloc.total, indicator, penalty))
    logger.debug(f"{indicator} at {list(capitals)}: {estimate.value:.6g} +- {estimate.std_error:.2g}")
    return estimate


def estimate_I(model, alloc, penalty=None, n=1_000_000, seed=0) -> IndicatorEstimate:
    return estimate_indicator(model, alloc, INDICATOR_I, penalty, n, seed)


def estimate_J(model, alloc, penalty=None, n=1_000_000, seed=0) -> IndicatorEstimate:
    return estimate_indicator(model, alloc, INDICATOR_J, penalty, n, seed)


def estimate_I_loc(model, alloc, penalty=None, n=1_000_000, seed=0) -> IndicatorEstimate:
    return estimate_indicator(model, alloc, INDICATOR_I_LOC, penalty, n, seed)


def estimate_condition(model: JointModel, i: int, alloc: Allocation, side: str,
                       n: int = 1_000_000, seed: int = 0,
                       penalty: Optional[Penalty] = None) -> IndicatorEstimate:
    """
    Estimate E[-g'(u_i - X_i) 1{X_i > u_i} 1{S <= u}] (side="lower") or with
    1{S >= u} (side="upper"); the group capital u is alloc.total.
    For g = |x| this is P(X_i > u_i, S <= u) or P(X_i > u_i, S >= u).
    """
    _check(model, alloc, n)
    if not 0 <= i < model.dimension:
        raise DomainError(f"branch index {i} out of range for dimension {model.dimension}")
    penalty = penalty or Penalty.absolute()
    capitals = alloc.as_array()
    return _estimate(model, n, seed,
                     lambda losses: condition_samples(losses, capitals, alloc.total, side, penalty)[:, i])


def sample_indicator_terms(model: JointModel, alloc: Allocation, n: int, seed: int,
                           penalty: Optional[Penalty] = None) -> pd.DataFrame:
    """
    Per-sample contributions on one shared stream.

    Columns: I, J, I_loc, then exceed_k, lower_k, upper_k for every branch k,
    where exceed_k is -g'(u_k - X_k) 1{X_k > u_k}.
    """
    _check(model, alloc, n)
    penalty = penalty or Penalty.absolute()
    capitals = alloc.as_array()

    def frame(losses: np.ndarray) -> pd.DataFrame:
        columns = {name: indicator_samples(losses, capitals, alloc.total, name, penalty) for name in INDICATORS}
        exceed = penalty.marginal_cost(capitals - losses)
        lower = condition_samples(losses, capitals, alloc.total, SIDE_LOWER, penalty)
        upper = condition_samples(losses, capitals, alloc.total, SIDE_UPPER, penalty)
        for k in range(model.dimension):
            columns[f"exceed_{k}"] = exceed[:, k]
            columns[f"lower_{k}"] = lower[:, k]
            columns[f"upper_{k}"] = upper[:, k]
        return pd.DataFrame(columns)

    return pd.concat(map_chunks(model, n, seed, frame), ignore_index=True)


def stationarity_certificate(model: JointModel, alloc: Allocation, indicator: str,
                             n: int = 1_000_000, seed: int = 0, sigmas: float = 4.0,
                             penalty: Optional[Penalty] = None) -> StationarityCertificate:
    """
    Check that the condition expectations agree across branches at alloc.

    Pairs are compared through the per-sample differences on one stream, so
    the common part of their noise cancels.
    """
    _check(model, alloc, n)
    side = _side_for(indicator)
    penalty = penalty or Penalty.absolute()
    capitals = alloc.as_array()
    d = model.dimension
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]

    def chunk_moments(losses: np.ndarray) -> Moments:
        terms = condition_samples(losses, capitals, alloc.total, side, penalty)
        diffs = np.column_stack([terms[:, i] - terms[:, j] for i, j in pairs])
        return Moments.of(np.hstack([terms, diffs]))

    moments = reduce_moments(map_chunks(model, n, seed, chunk_moments))
    means = np.atleast_1d(moments.mean)
    errors = np.atleast_1d(moments.std_error)
    estimates = tuple(IndicatorEstimate(float(means[k]), float(errors[k]), int(n), int(seed)) for k in range(d))

    max_z = 0.0
    for k in range(len(pairs)):
        gap, se = abs(float(means[d + k])), float(errors[d + k])
        if gap == 0.0:
            continue
        max_z = max(max_z, gap / se if se > 0.0 else math.inf)
    certificate = StationarityCertificate(indicator, side, estimates, max_z, float(sigmas))
    logger.info(f"Stationarity of {indicator} at {list(capitals)}: max z {max_z:.2f} "
                f"({'pass' if certificate.passed else 'fail'})")
    return certificate
