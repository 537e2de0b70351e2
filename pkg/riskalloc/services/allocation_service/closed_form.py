"""
Optimality equation systems and closed-form allocations.

Every system here is separable: the optimality condition of branch i is a
term T_i that depends on the fraction alpha_i = u_i / u alone and decreases
in it. The optimal allocation equalises the terms; the residual compares
branch 1 with every other branch,

    residual_j = T_1(alpha_1) - T_{j+1}(alpha_{j+1}),  j = 1..d-1.

Exponential-type terms are signed sums sum_k w_k exp(e_k), so they are also
available in log form without underflow. Solvers work on the balanced
residual log T_1 - log T_{j+1}, which has the same root.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from riskalloc.errors import DomainError, SingularParameters, TiedRiskiestBranch
from riskalloc.services.distribution_service.joint_models import (
    CorrelatedParetoMixture,
    FgmExponential,
    IndependentExponential,
    IndependentPareto,
    JointModel,
    MarshallOlkin,
    fgm_joint_cdf_x1_s,
    fgm_joint_cdf_x2_s,
    mo_joint_cdf_x1_s,
    mo_joint_cdf_x2_s,
)
from riskalloc.services.distribution_service.marginals import (
    RATE_TOLERANCE,
    Marginal,
    check_distinct_rates,
    erlang_coefficients,
)
from riskalloc.services.indicator_service.indicators import Allocation
from riskalloc.services.indicator_service.penalties import Penalty

logger = logging.getLogger(__name__)

LOG_TINY = math.log(np.finfo(float).tiny)
LOG_HUGE = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class ResidualSystem:
    """
    Per-branch optimality terms of one model, indicator and capital.

    Attributes:
        name: label used in logs and reports
        dimension: number of branches d
        term: T_i(alpha_i) as term(i, alpha_i)
        log_term: log T_i(alpha_i), finite even where T_i underflows
        context: model parameters and capital the system closes over
        scale: positive factor applied to every term
        known_root: fractions returned without solving (symmetric special cases)
    """

    name: str
    dimension: int
    term: Callable[[int, float], float] = field(compare=False)
    log_term: Callable[[int, float], float] = field(compare=False)
    context: Dict[str, Any] = field(default_factory=dict, compare=False)
    scale: float = 1.0
    known_root: Optional[Tuple[float, ...]] = None

    def terms(self, fractions: Sequence[float]) -> np.ndarray:
        alpha = self._fractions(fractions)
        return self.scale * np.array([self.term(i, a) for i, a in enumerate(alpha)])

    def log_terms(self, fractions: Sequence[float]) -> np.ndarray:
        alpha = self._fractions(fractions)
        return math.log(self.scale) + np.array([self.log_term(i, a) for i, a in enumerate(alpha)])

    def residual(self, fractions: Sequence[float]) -> np.ndarray:
        """
        T_1 - T_j for j = 2..d. Terms beyond the float range are first divided by
        exp(max log T_i), which leaves the root where it is.
        """
        t = self.terms(fractions)
        if not np.all(np.isfinite(t)):
            logs = self.log_terms(fractions)
            t = np.exp(logs - np.max(logs))
        return t[0] - t[1:]

    def balanced(self, fractions: Sequence[float]) -> np.ndarray:
        t = self.log_terms(fractions)
        return t[0] - t[1:]

    def scaled(self, factor: float) -> "ResidualSystem":
        if not factor > 0.0:
            raise DomainError(f"scale factor must be positive, got {factor}")
        return replace(self, scale=self.scale * factor)

    def _fractions(self, fractions) -> np.ndarray:
        alpha = np.asarray(fractions, dtype=float)
        if alpha.shape != (self.dimension,):
            raise DomainError(f"{self.name} expects {self.dimension} fractions, got shape {alpha.shape}")
        return alpha


def _exp_sum_system(name: str, dimension: int,
                    exponents: Callable[[int, float], Tuple[np.ndarray, np.ndarray]],
                    context: Dict[str, Any]) -> ResidualSystem:
    """System whose branch terms are sum_k w_k exp(e_k) with (e, w) = exponents(i, alpha_i)."""

    def term(i: int, a: float) -> float:
        e, w = exponents(i, a)
        value, sign = logsumexp(e, b=w, return_sign=True)
        if value > LOG_HUGE:
            return math.copysign(math.inf, sign)
        return float(sign * math.exp(value))

    def log_term(i: int, a: float) -> float:
        e, w = exponents(i, a)
        value, sign = logsumexp(e, b=w, return_sign=True)
        floor = float(np.max(e)) + LOG_TINY
        if sign <= 0 or not np.isfinite(value):
            return floor
        return max(float(value), floor)

    return ResidualSystem(name, dimension, term, log_term, context)


def _probability_system(name: str, dimension: int, term: Callable[[int, float], float],
                        context: Dict[str, Any], known_root=None) -> ResidualSystem:
    """System whose branch terms are probabilities computed directly."""

    def log_term(i: int, a: float) -> float:
        value = term(i, a)
        return math.log(value) if value > 0.0 else LOG_TINY

    return ResidualSystem(name, dimension, term, log_term, context, known_root=known_root)


def _check_capital(u: float) -> float:
    u = float(u)
    if not math.isfinite(u) or u <= 0.0:
        raise DomainError(f"capital u must be positive, got {u}")
    return u


def _rates_are_equal(rates: np.ndarray) -> bool:
    return float(np.max(rates) - np.min(rates)) <= RATE_TOLERANCE * float(np.max(rates))


# Independent exponentials

def eizo_system(rates: Sequence[float], u: float) -> ResidualSystem:
    """
    I-optimality system for independent exponentials:
    T_i = P(X_i > u_i, S <= u) = h(b_i a_i) - sum_l A_l h(a_i b_i + (1 - a_i) b_l), h(x) = exp(-u x).
    """
    beta = check_distinct_rates(rates)
    u = _check_capital(u)
    weights = np.concatenate([[1.0], -erlang_coefficients(beta)])

    def exponents(i, a):
        return -u * np.concatenate([[beta[i] * a], a * beta[i] + (1.0 - a) * beta]), weights

    return _exp_sum_system("eizo", beta.size, exponents, {"rates": tuple(beta), "u": u})


def eizv_system(rates: Sequence[float], u: float) -> ResidualSystem:
    """J-optimality system: T_i = P(X_i > u_i, S > u) = sum_l A_l h(a_i b_i + (1 - a_i) b_l)."""
    beta = check_distinct_rates(rates)
    u = _check_capital(u)
    weights = erlang_coefficients(beta)

    def exponents(i, a):
        return -u * (a * beta[i] + (1.0 - a) * beta), weights

    return _exp_sum_system("eizv", beta.size, exponents, {"rates": tuple(beta), "u": u})


def equal_rate_allocation(d: int) -> np.ndarray:
    """Uniform fractions: the optimum for identically distributed independent branches."""
    if d < 1:
        raise DomainError(f"dimension must be positive, got {d}")
    return np.full(d, 1.0 / d)


def exponential_system(rates: Sequence[float], u: float, indicator: str = "I") -> ResidualSystem:
    """
    eizo/eizv system, or a uniform known root when all rates coincide.
    """
    beta = np.asarray(rates, dtype=float)
    if beta.size >= 2 and np.all(beta > 0.0) and _rates_are_equal(beta):
        u = _check_capital(u)
        logger.debug(f"Equal rates {list(beta)}: uniform allocation")
        root = tuple(equal_rate_allocation(beta.size))
        return _probability_system("equal_rates", beta.size, lambda i, a: math.exp(-u * beta[i] * a),
                                   {"rates": tuple(beta), "u": u}, known_root=root)
    if indicator == "I":
        return eizo_system(beta, u)
    if indicator == "J":
        return eizv_system(beta, u)
    raise DomainError(f"exponential systems exist for I and J, got {indicator!r}")


def asymptotic_exponential_I(rates: Sequence[float]) -> np.ndarray:
    """Large-capital I allocation: fractions proportional to 1/rate."""
    beta = np.asarray(rates, dtype=float)
    if beta.size == 0 or np.any(beta <= 0.0):
        raise DomainError(f"rates must be positive, got {list(beta)}")
    inverse = 1.0 / beta
    return inverse / inverse.sum()


def _degenerate(index: int, d: int) -> np.ndarray:
    out = np.zeros(d)
    out[index] = 1.0
    return out


def asymptotic_exponential_J(rates: Sequence[float]) -> np.ndarray:
    """Large-capital J allocation: everything to the branch with the smallest rate."""
    beta = np.asarray(rates, dtype=float)
    if beta.size == 0 or np.any(beta <= 0.0):
        raise DomainError(f"rates must be positive, got {list(beta)}")
    k = int(np.argmin(beta))
    ties = np.abs(beta - beta[k]) <= RATE_TOLERANCE * beta[k]
    if np.count_nonzero(ties) > 1:
        raise TiedRiskiestBranch(f"smallest rate {beta[k]} is shared by branches {list(np.flatnonzero(ties))}")
    return _degenerate(k, beta.size)


# Pareto

def pareto_asymptotic_I_system(shape: float, scales: Sequence[float]) -> ResidualSystem:
    """
    Capital-free I system for independent Pareto-Lomax branches:
    T_i = (a_i / b_i)^(-shape) - (1 / b_i)^(-shape).
    """
    a = float(shape)
    if not a > 0.0:
        raise DomainError(f"shape must be positive, got {a}")
    b = np.asarray(scales, dtype=float)
    if b.size < 2 or np.any(b <= 0.0):
        raise DomainError(f"need at least two positive scales, got {list(b)}")
    log_b = np.log(b)
    weights = np.array([1.0, -1.0])

    def exponents(i, frac):
        return np.array([a * (log_b[i] - math.log(frac)), a * log_b[i]]), weights

    return _exp_sum_system("pareto_asymptotic_I", b.size, exponents, {"shape": a, "scales": tuple(b)})


def independent_pareto_asymptotic_I_system(model: Union[IndependentPareto, CorrelatedParetoMixture]) -> ResidualSystem:
    """
    pareto_asymptotic_I_system built on the model's marginal scales, treating
    the branches as independent. For the mixture the marginal scales are
    mix_rate / rates[i].
    """
    shapes = {m.shape for m in model.marginals}
    if len(shapes) != 1:
        raise DomainError("branches must share the Pareto shape")
    return pareto_asymptotic_I_system(shapes.pop(), [m.scale for m in model.marginals])


def pareto_asymptotic_J(scales: Sequence[float]) -> np.ndarray:
    """Large-capital J allocation: everything to the branch with the largest scale."""
    b = np.asarray(scales, dtype=float)
    if b.size == 0 or np.any(b <= 0.0):
        raise DomainError(f"scales must be positive, got {list(b)}")
    k = int(np.argmax(b))
    ties = np.abs(b - b[k]) <= RATE_TOLERANCE * b[k]
    if np.count_nonzero(ties) > 1:
        raise TiedRiskiestBranch(f"largest scale {b[k]} is shared by branches {list(np.flatnonzero(ties))}")
    return _degenerate(k, b.size)


# Gamma mixture of exponentials

def _mixture_parts(model: CorrelatedParetoMixture):
    beta = np.asarray(model.rates)
    return beta, erlang_coefficients(beta), model.mix_shape, model.mix_rate


def mixture_I_system(model: CorrelatedParetoMixture, u: float) -> ResidualSystem:
    """
    I system of the mixture: s(b_i a_i) - sum_l A_l s(a_i b_i + (1 - a_i) b_l),
    with s(x) = (1 + x u / mix_rate)^(-mix_shape).
    """
    u = _check_capital(u)
    beta, coef, a, b = _mixture_parts(model)
    weights = np.concatenate([[1.0], -coef])

    def exponents(i, frac):
        x = np.concatenate([[beta[i] * frac], frac * beta[i] + (1.0 - frac) * beta])
        return -a * np.log1p(x * u / b), weights

    return _exp_sum_system("mixture_I", beta.size, exponents, {"model": model, "u": u})


def mixture_J_system(model: CorrelatedParetoMixture, u: float) -> ResidualSystem:
    """J system of the mixture: sum_l A_l s(a_i b_i + (1 - a_i) b_l)."""
    u = _check_capital(u)
    beta, coef, a, b = _mixture_parts(model)

    def exponents(i, frac):
        x = frac * beta[i] + (1.0 - frac) * beta
        return -a * np.log1p(x * u / b), coef

    return _exp_sum_system("mixture_J", beta.size, exponents, {"model": model, "u": u})


def mixture_asymptotic_I_system(model: CorrelatedParetoMixture) -> ResidualSystem:
    """Large-capital limit of mixture_I_system divided by s(1): s replaced by x^(-mix_shape)."""
    beta, coef, a, _ = _mixture_parts(model)
    weights = np.concatenate([[1.0], -coef])

    def exponents(i, frac):
        x = np.concatenate([[beta[i] * frac], frac * beta[i] + (1.0 - frac) * beta])
        return -a * np.log(x), weights

    return _exp_sum_system("mixture_asymptotic_I", beta.size, exponents, {"model": model})


def mixture_asymptotic_J_system(model: CorrelatedParetoMixture) -> ResidualSystem:
    beta, coef, a, _ = _mixture_parts(model)

    def exponents(i, frac):
        return -a * np.log(frac * beta[i] + (1.0 - frac) * beta), coef

    return _exp_sum_system("mixture_asymptotic_J", beta.size, exponents, {"model": model})


# Comonotonic and local allocations

def _marginals_of(marginals: Union[Sequence[Marginal], JointModel]) -> Tuple[Marginal, ...]:
    if isinstance(marginals, JointModel):
        return marginals.marginals
    out = tuple(marginals)
    if len(out) < 1 or not all(isinstance(m, Marginal) for m in out):
        raise DomainError("expected a sequence of marginals")
    return out


def comonotonic_allocation(marginals: Union[Sequence[Marginal], JointModel], u: float) -> Allocation:
    """
    Allocation with equal cdf levels F_i(u_i) across branches, exhausting u.

    The common level is searched on the log survival scale y = log P(X_i > u_i),
    so allocations deep in the tail keep full precision.

    Args:
        marginals: branch marginals (or a model whose marginals are used)
        u: group capital

    Returns:
        The Allocation u_i = F_i^{-1}(t) with sum u_i = u.
    """
    components = _marginals_of(marginals)
    u = float(u)
    if u < 0.0:
        raise DomainError(f"capital must be nonnegative, got {u}")
    if u == 0.0:
        return Allocation(tuple(0.0 for _ in components), 0.0)

    def excess(y: float) -> float:
        q = math.exp(y)
        return math.fsum(float(m._isf(np.float64(q))) for m in components) - u

    y_hi = math.log1p(-1e-15)
    if excess(y_hi) >= 0.0:
        raise DomainError(f"capital {u} lies below the lower support of the aggregate quantile")
    y_lo = -1.0
    while excess(y_lo) < 0.0:
        if y_lo <= -700.0:
            raise DomainError(f"capital {u} is beyond the representable quantile range")
        y_lo = max(2.0 * y_lo, -700.0)
    y = brentq(excess, y_lo, y_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    q = math.exp(y)
    capitals = np.array([float(m._isf(np.float64(q))) for m in components])
    capitals *= u / capitals.sum()
    logger.debug(f"Comonotonic level {-math.expm1(y):.12g} gives capitals {list(capitals)}")
    return Allocation(tuple(capitals), u)


def iloc_allocation(marginals: Union[Sequence[Marginal], JointModel], u: float) -> Allocation:
    """I_loc optimum: equal marginal survival P(X_i > u_i) across branches."""
    return comonotonic_allocation(marginals, u)


# Bivariate dependent models, parametrized by beta = u_1 / u

def _check_fraction(beta_frac: float) -> float:
    beta_frac = float(beta_frac)
    if not 0.0 <= beta_frac <= 1.0:
        raise DomainError(f"beta_frac must lie in [0, 1], got {beta_frac}")
    return beta_frac


def _bivariate_terms(model: JointModel, u: float, indicator: str, cdfs) -> Callable[[int, float], float]:
    """
    Condition terms of a pair from its F_{X_i,S} functions:
    lower side P(S <= u) - F_{X_i,S}(a u, u), upper side P(X_i > a u) minus the lower side.
    """
    if indicator not in ("I", "J"):
        raise DomainError(f"bivariate systems exist for I and J, got {indicator!r}")

    def lower(i, a):
        return cdfs[i](model, u, u) - cdfs[i](model, a * u, u)

    if indicator == "I":
        return lower

    def upper(i, a):
        return max(model.marginal(i).survival(a * u) - lower(i, a), 0.0)

    return upper


def fgm_system(model: FgmExponential, u: float, indicator: str = "I") -> ResidualSystem:
    """Optimality system of the FGM pair in the fractions (beta, 1 - beta)."""
    u = _check_capital(u)
    term = _bivariate_terms(model, u, indicator, (fgm_joint_cdf_x1_s, fgm_joint_cdf_x2_s))
    return _probability_system(f"fgm_{indicator}", 2, term, {"model": model, "u": u})


def fgm_residual(beta1: float, beta2: float, theta: float, u: float, beta_frac: float) -> float:
    """
    P(X1 > beta u, S <= u) - P(X2 > (1 - beta) u, S <= u) for the FGM pair,
    written as F_{X2,S}((1 - beta) u, u) - F_{X1,S}(beta u, u).
    """
    model = FgmExponential(beta1, beta2, theta)
    u = _check_capital(u)
    b = _check_fraction(beta_frac)
    return fgm_joint_cdf_x2_s(model, (1.0 - b) * u, u) - fgm_joint_cdf_x1_s(model, b * u, u)


def fgm_expanded_residual(beta1: float, beta2: float, theta: float, u: float, beta_frac: float) -> float:
    """
    fgm_residual expanded in h(x) = exp(-beta1 u x) with r = beta2 / beta1.

    Each joint cdf collapses to one marginal term plus four weighted
    differences, one per FGM building block.
    """
    model = FgmExponential(beta1, beta2, theta)
    u = _check_capital(u)
    b = _check_fraction(beta_frac)
    r, th = model.beta2 / model.beta1, model.theta

    def h(x):
        return math.exp(-model.beta1 * u * x)

    first = (1.0 - h(b)
             + (1.0 + th) / (r - 1.0) * (h(r) - h(b + r * (1.0 - b)))
             + th / (r - 1.0) * (h(2.0 * r) - h(2.0 * b + 2.0 * r * (1.0 - b)))
             - 2.0 * th / (r - 2.0) * (h(r) - h(2.0 * b + r * (1.0 - b)))
             - th / (2.0 * r - 1.0) * (h(2.0 * r) - h(b + 2.0 * r * (1.0 - b))))
    c = 1.0 - b
    second = (1.0 - h(r * c)
              + (1.0 + th) * r / (1.0 - r) * (h(1.0) - h(r * c + b))
              + th * r / (1.0 - r) * (h(2.0) - h(2.0 * r * c + 2.0 * b))
              - 2.0 * th * r / (1.0 - 2.0 * r) * (h(1.0) - h(2.0 * r * c + b))
              - th * r / (2.0 - r) * (h(2.0) - h(r * c + 2.0 * b)))
    return second - first


def mo_system(model: MarshallOlkin, u: float, indicator: str = "I") -> ResidualSystem:
    """
    Optimality system of the common-shock pair in the fractions (beta, 1 - beta).
    Exchangeable parameters return the midpoint without solving.
    """
    u = _check_capital(u)
    known = (0.5, 0.5) if model.symmetric else None
    if model.singular:
        def term(i, a):
            raise SingularParameters(f"condition terms undefined for {model}")
    else:
        term = _bivariate_terms(model, u, indicator, (mo_joint_cdf_x1_s, mo_joint_cdf_x2_s))
    return _probability_system(f"marshall_olkin_{indicator}", 2, term, {"model": model, "u": u},
                               known_root=known)


def mo_residual(lambda0: float, lambda1: float, lambda2: float, u: float, beta_frac: float) -> float:
    """F_{X2,S}((1 - beta) u, u) - F_{X1,S}(beta u, u) for the common-shock pair."""
    model = MarshallOlkin(lambda0, lambda1, lambda2)
    if model.singular:
        raise SingularParameters(f"residual undefined at lambda=({lambda0}, {lambda1}, {lambda2})")
    u = _check_capital(u)
    b = _check_fraction(beta_frac)
    return mo_joint_cdf_x2_s(model, (1.0 - b) * u, u) - mo_joint_cdf_x1_s(model, b * u, u)


def require_absolute(penalty: Optional[Penalty]):
    """Closed forms hold for g = |x| only."""
    if penalty is not None and not penalty.is_absolute:
        raise DomainError(f"closed-form systems need the absolute penalty, got '{penalty.name}'")


def system_for(model: JointModel, u: float, indicator: str) -> ResidualSystem:
    """
    The optimality system of a model, for the models that have one.

    Comonotonic models and the I_loc indicator have direct formulas instead;
    see comonotonic_allocation and iloc_allocation.
    """
    if isinstance(model, IndependentExponential):
        return exponential_system(model.rates, u, indicator)
    if isinstance(model, CorrelatedParetoMixture) and indicator in ("I", "J"):
        return mixture_I_system(model, u) if indicator == "I" else mixture_J_system(model, u)
    if isinstance(model, FgmExponential):
        return fgm_system(model, u, indicator)
    if isinstance(model, MarshallOlkin):
        return mo_system(model, u, indicator)
    raise DomainError(f"no closed-form {indicator} system for model '{model.kind}'")
