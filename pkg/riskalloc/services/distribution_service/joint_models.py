"""
Dependent loss models.

Each model is an immutable dataclass with an exact sampler. Exact joint
quantities needed by the optimality conditions live in module functions
next to the model they belong to.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar, Dict, Tuple

import numpy as np

from riskalloc.errors import DomainError, SingularParameters
from riskalloc.services.distribution_service.marginals import (
    Exponential,
    Marginal,
    ParetoLomax,
    build_marginal,
    check_distinct_rates,
    erlang_coefficients,
)

logger = logging.getLogger(__name__)

# Relative distance to a vanishing Marshall-Olkin denominator that counts as singular
SINGULAR_TOLERANCE = 1e-8


def _positive_tuple(name: str, values) -> Tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)
    except TypeError as e:
        raise DomainError(f"{name} must be a sequence of numbers") from e
    if any(not math.isfinite(v) or v <= 0.0 for v in out):
        raise DomainError(f"{name} must be positive and finite, got {list(out)}")
    return out


def _positive(name: str, value) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be a positive finite number, got {value}")
    return value


class JointModel(ABC):
    """A d-variate nonnegative loss vector."""

    kind: ClassVar[str] = ""

    @property
    @abstractmethod
    def dimension(self) -> int:
        ...

    @abstractmethod
    def marginal(self, i: int) -> Marginal:
        """Law of the i-th coordinate (0-based)."""

    @abstractmethod
    def sample(self, stream: np.random.Generator, size: int) -> np.ndarray:
        """Draw a (size, d) matrix of loss vectors."""

    @property
    def marginals(self) -> Tuple[Marginal, ...]:
        return tuple(self.marginal(i) for i in range(self.dimension))

    def _check_index(self, i: int) -> int:
        if not 0 <= i < self.dimension:
            raise DomainError(f"branch index {i} out of range for dimension {self.dimension}")
        return i


@dataclass(frozen=True)
class IndependentExponential(JointModel):
    rates: Tuple[float, ...]

    kind: ClassVar[str] = "independent_exponential"

    def __post_init__(self):
        rates = _positive_tuple("rates", self.rates)
        if len(rates) < 2:
            raise DomainError("independent_exponential needs at least two branches")
        object.__setattr__(self, "rates", rates)

    @property
    def dimension(self) -> int:
        return len(self.rates)

    @property
    def equal_rates(self) -> bool:
        return max(self.rates) - min(self.rates) <= 1e-9 * max(self.rates)

    def marginal(self, i):
        return Exponential(self.rates[self._check_index(i)])

    def sample(self, stream, size):
        return stream.standard_exponential((size, self.dimension)) / np.asarray(self.rates)


@dataclass(frozen=True)
class IndependentPareto(JointModel):
    shape: float
    scales: Tuple[float, ...]

    kind: ClassVar[str] = "independent_pareto"

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive("shape", self.shape))
        scales = _positive_tuple("scales", self.scales)
        if len(scales) < 2:
            raise DomainError("independent_pareto needs at least two branches")
        object.__setattr__(self, "scales", scales)

    @property
    def dimension(self) -> int:
        return len(self.scales)

    def marginal(self, i):
        return ParetoLomax(self.shape, self.scales[self._check_index(i)])

    def sample(self, stream, size):
        return np.asarray(self.scales) * stream.pareto(self.shape, (size, self.dimension))


@dataclass(frozen=True)
class CorrelatedParetoMixture(JointModel):
    """
    Exponentials sharing a Gamma(mix_shape, mix_rate) rate multiplier.

    Given the multiplier t, X_i is exponential with rate rates[i] * t, which
    makes each X_i Pareto-Lomax with shape mix_shape and scale mix_rate / rates[i].
    """

    mix_shape: float
    mix_rate: float
    rates: Tuple[float, ...]

    kind: ClassVar[str] = "pareto_mixture"

    def __post_init__(self):
        object.__setattr__(self, "mix_shape", _positive("mix_shape", self.mix_shape))
        object.__setattr__(self, "mix_rate", _positive("mix_rate", self.mix_rate))
        rates = tuple(float(b) for b in check_distinct_rates(self.rates))
        if len(rates) < 2:
            raise DomainError("pareto_mixture needs at least two branches")
        object.__setattr__(self, "rates", rates)

    @property
    def dimension(self) -> int:
        return len(self.rates)

    def marginal(self, i):
        return ParetoLomax(self.mix_shape, self.mix_rate / self.rates[self._check_index(i)])

    def sample(self, stream, size):
        multiplier = stream.gamma(self.mix_shape, 1.0 / self.mix_rate, size)
        draws = stream.standard_exponential((size, self.dimension))
        return draws / (multiplier[:, None] * np.asarray(self.rates))


@dataclass(frozen=True)
class Comonotonic(JointModel):
    """All coordinates are quantile transforms of one uniform."""

    components: Tuple[Marginal, ...]

    kind: ClassVar[str] = "comonotonic"

    def __post_init__(self):
        components = tuple(self.components)
        if len(components) < 2:
            raise DomainError("comonotonic needs at least two branches")
        if not all(isinstance(m, Marginal) for m in components):
            raise DomainError("comonotonic components must be marginals")
        object.__setattr__(self, "components", components)

    @property
    def dimension(self) -> int:
        return len(self.components)

    def marginal(self, i):
        return self.components[self._check_index(i)]

    def sample(self, stream, size):
        level = stream.random(size)
        return np.column_stack([m._ppf(level) for m in self.components])


@dataclass(frozen=True)
class FgmExponential(JointModel):
    """Exponential marginals joined by the Farlie-Gumbel-Morgenstern copula."""

    beta1: float
    beta2: float
    theta: float

    kind: ClassVar[str] = "fgm_exponential"

    def __post_init__(self):
        beta1 = _positive("beta1", self.beta1)
        beta2 = _positive("beta2", self.beta2)
        theta = float(self.theta)
        if not beta1 < beta2 / 2.0:
            raise DomainError(f"fgm_exponential requires beta1 < beta2/2, got beta1={beta1}, beta2={beta2}")
        if not -1.0 <= theta <= 1.0:
            raise DomainError(f"theta must lie in [-1, 1], got {theta}")
        object.__setattr__(self, "beta1", beta1)
        object.__setattr__(self, "beta2", beta2)
        object.__setattr__(self, "theta", theta)

    @property
    def dimension(self) -> int:
        return 2

    def marginal(self, i):
        return Exponential((self.beta1, self.beta2)[self._check_index(i)])

    def pearson_correlation(self) -> float:
        return self.theta / 4.0

    def joint_cdf(self, x1: float, x2: float) -> float:
        """P(X1 <= x1, X2 <= x2)."""
        f1 = -math.expm1(-self.beta1 * max(x1, 0.0))
        f2 = -math.expm1(-self.beta2 * max(x2, 0.0))
        return f1 * f2 * (1.0 + self.theta * (1.0 - f1) * (1.0 - f2))

    def sample(self, stream, size):
        level1 = stream.random(size)
        w = stream.random(size)
        # conditional cdf of the second uniform is v + t v (1 - v); invert the quadratic
        t = self.theta * (1.0 - 2.0 * level1)
        level2 = 2.0 * w / ((1.0 + t) + np.sqrt((1.0 + t) ** 2 - 4.0 * t * w))
        x1 = -np.log1p(-level1) / self.beta1
        x2 = -np.log1p(-level2) / self.beta2
        return np.column_stack([x1, x2])


@dataclass(frozen=True)
class MarshallOlkin(JointModel):
    """
    Common-shock exponential pair: X_i = min(Y_i, Y_0) with Y_j exponential(lambda_j).
    """

    lambda0: float
    lambda1: float
    lambda2: float

    kind: ClassVar[str] = "marshall_olkin"

    def __post_init__(self):
        lambda0 = float(self.lambda0)
        if not math.isfinite(lambda0) or lambda0 < 0.0:
            raise DomainError(f"lambda0 must be nonnegative, got {lambda0}")
        object.__setattr__(self, "lambda0", lambda0)
        object.__setattr__(self, "lambda1", _positive("lambda1", self.lambda1))
        object.__setattr__(self, "lambda2", _positive("lambda2", self.lambda2))
        if self.singular and not self.symmetric:
            raise SingularParameters(
                f"Marshall-Olkin parameters ({self.lambda0}, {self.lambda1}, {self.lambda2}) "
                f"sit on a singular denominator"
            )

    @property
    def dimension(self) -> int:
        return 2

    @property
    def total_rate(self) -> float:
        return self.lambda0 + self.lambda1 + self.lambda2

    @property
    def symmetric(self) -> bool:
        return self.lambda1 == self.lambda2

    @property
    def singular(self) -> bool:
        eps = SINGULAR_TOLERANCE * self.total_rate
        beta1 = self.lambda1 + self.lambda0
        beta2 = self.lambda2 + self.lambda0
        return abs(beta2 - self.lambda1) <= eps or abs(self.lambda2 - beta1) <= eps

    def swapped(self) -> "MarshallOlkin":
        return MarshallOlkin(self.lambda0, self.lambda2, self.lambda1)

    def marginal(self, i):
        return Exponential((self.lambda1, self.lambda2)[self._check_index(i)] + self.lambda0)

    def pearson_correlation(self) -> float:
        return self.lambda0 / self.total_rate

    def joint_survival(self, x1: float, x2: float) -> float:
        """P(X1 > x1, X2 > x2)."""
        x1, x2 = max(x1, 0.0), max(x2, 0.0)
        return math.exp(-self.lambda1 * x1 - self.lambda2 * x2 - self.lambda0 * max(x1, x2))

    def sample(self, stream, size):
        own = stream.standard_exponential((size, 2)) / np.array([self.lambda1, self.lambda2])
        shock = stream.standard_exponential(size)
        if self.lambda0 > 0.0:
            shock = shock / self.lambda0
        else:
            shock = np.full(size, np.inf)
        return np.minimum(own, shock[:, None])


def sample_vector(model: JointModel, stream: np.random.Generator) -> np.ndarray:
    """One loss vector; advances only the given stream."""
    return model.sample(stream, 1)[0]


def sample_matrix(model: JointModel, stream: np.random.Generator, n: int) -> np.ndarray:
    if n < 0:
        raise DomainError(f"sample count must be nonnegative, got {n}")
    return model.sample(stream, int(n))


def _check_levels(u_i: float, u: float) -> Tuple[float, float]:
    u_i, u = float(u_i), float(u)
    if not 0.0 <= u_i <= u:
        raise DomainError(f"need 0 <= u_i <= u, got u_i={u_i}, u={u}")
    return u_i, u


def exp_joint_lower_prob(rates, i: int, u_i: float, u: float) -> float:
    """
    P(X_i > u_i, S <= u) for independent exponentials with distinct rates.

    Args:
        rates: exponential rates of the branches
        i: branch index (0-based)
        u_i: capital of branch i
        u: total capital

    Returns:
        The joint probability, clipped to [0, 1].
    """
    beta = check_distinct_rates(rates)
    if not 0 <= i < beta.size:
        raise DomainError(f"branch index {i} out of range")
    u_i, u = _check_levels(u_i, u)
    weights = erlang_coefficients(beta)
    own = beta[i] * u_i
    value = math.exp(-own) - float(np.dot(weights, np.exp(-(own + beta * (u - u_i)))))
    return min(max(value, 0.0), 1.0)


def mixture_joint_lower_prob(model: CorrelatedParetoMixture, i: int, u_i: float, u: float) -> float:
    """P(X_i > u_i, S <= u) for the Gamma-mixed exponential model."""
    model._check_index(i)
    u_i, u = _check_levels(u_i, u)
    beta = np.asarray(model.rates)
    weights = erlang_coefficients(beta)
    a, b = model.mix_shape, model.mix_rate
    own = beta[i] * u_i
    lower = math.exp(-a * math.log1p(own / b))
    mixed = np.exp(-a * np.log1p((own + beta * (u - u_i)) / b))
    value = lower - float(np.dot(weights, mixed))
    return min(max(value, 0.0), 1.0)


def fgm_building_block(x1: float, s: float, a: float, b: float) -> float:
    """
    P(Y1 <= x1, Y1 + Y2 <= s) for independent exponentials Y1 ~ a, Y2 ~ b, x1 <= s.
    """
    c = a / (b - a)
    return -math.expm1(-a * x1) + c * math.exp(-b * s) - c * math.exp(-a * x1 - b * (s - x1))


def fgm_joint_cdf_x1_s(model: FgmExponential, x1: float, s: float) -> float:
    """P(X1 <= x1, X1 + X2 <= s) under the FGM model."""
    x1, s = _check_levels(x1, s)
    b1, b2, theta = model.beta1, model.beta2, model.theta
    value = ((1.0 + theta) * fgm_building_block(x1, s, b1, b2)
             + theta * fgm_building_block(x1, s, 2.0 * b1, 2.0 * b2)
             - theta * fgm_building_block(x1, s, 2.0 * b1, b2)
             - theta * fgm_building_block(x1, s, b1, 2.0 * b2))
    return min(max(value, 0.0), 1.0)


def fgm_joint_cdf_x2_s(model: FgmExponential, x2: float, s: float) -> float:
    """P(X2 <= x2, X1 + X2 <= s); the FGM copula is exchangeable so the rates swap."""
    x2, s = _check_levels(x2, s)
    b1, b2, theta = model.beta1, model.beta2, model.theta
    value = ((1.0 + theta) * fgm_building_block(x2, s, b2, b1)
             + theta * fgm_building_block(x2, s, 2.0 * b2, 2.0 * b1)
             - theta * fgm_building_block(x2, s, 2.0 * b2, b1)
             - theta * fgm_building_block(x2, s, b2, 2.0 * b1))
    return min(max(value, 0.0), 1.0)


def mo_joint_cdf_x1_s(model: MarshallOlkin, x1: float, s: float) -> float:
    """
    P(X1 <= x1, X1 + X2 <= s) under the common-shock model.

    The shock term carries the diagonal atom. The own-jump terms split at
    s = 2 x1, where the two branches agree.
    """
    x1, s = _check_levels(x1, s)
    if model.singular:
        raise SingularParameters(
            f"joint cdf undefined for lambda=({model.lambda0}, {model.lambda1}, {model.lambda2})"
        )
    l0, l1, l2 = model.lambda0, model.lambda1, model.lambda2
    ls = model.total_rate
    b1, b2 = l1 + l0, l2 + l0
    m = min(x1, 0.5 * s)
    reach = -math.expm1(-ls * m)

    # X1 = X2 = Y0 on the diagonal
    shock = l0 / ls * reach
    # X1 = Y1 < min(Y2, Y0)
    first = (l1 / ls * reach
             - l1 / (b2 - l1) * (math.exp(-b2 * s + (b2 - l1) * m) - math.exp(-b2 * s)))
    # X2 = Y2 < min(Y1, Y0)
    if s >= 2.0 * x1:
        second = -math.expm1(-b1 * x1) + b1 / (b1 + l2) * math.expm1(-(b1 + l2) * x1)
    else:
        half = math.exp(-(b1 + l2) * 0.5 * s)
        second = (-math.expm1(-b1 * x1)
                  - b1 / (b1 + l2) * (1.0 - half)
                  - b1 / (l2 - b1) * (math.exp(-l2 * s + (l2 - b1) * x1) - half))
    return min(max(shock + first + second, 0.0), 1.0)


def mo_joint_cdf_x2_s(model: MarshallOlkin, x2: float, s: float) -> float:
    """P(X2 <= x2, X1 + X2 <= s), from the swapped model."""
    return mo_joint_cdf_x1_s(model.swapped(), x2, s)


def build_model(spec: Dict[str, Any]) -> JointModel:
    """
    Build a joint model from its config mapping, e.g. {"kind": "fgm_exponential",
    "beta1": 0.05, "beta2": 0.25, "theta": 0.5}.
    """
    kind = str(spec.get("kind", "")).lower()
    try:
        if kind == IndependentExponential.kind:
            return IndependentExponential(rates=tuple(spec["rates"]))
        if kind == IndependentPareto.kind:
            return IndependentPareto(shape=spec["shape"], scales=tuple(spec["scales"]))
        if kind == CorrelatedParetoMixture.kind:
            return CorrelatedParetoMixture(mix_shape=spec["mix_shape"], mix_rate=spec["mix_rate"],
                                           rates=tuple(spec["rates"]))
        if kind == Comonotonic.kind:
            return Comonotonic(components=tuple(build_marginal(m) for m in spec["marginals"]))
        if kind == FgmExponential.kind:
            return FgmExponential(beta1=spec["beta1"], beta2=spec["beta2"], theta=spec.get("theta", 0.0))
        if kind == MarshallOlkin.kind:
            return MarshallOlkin(lambda0=spec["lambda0"], lambda1=spec["lambda1"], lambda2=spec["lambda2"])
    except KeyError as e:
        raise DomainError(f"model '{kind}' is missing parameter {e}") from e
    raise DomainError(f"unknown model kind '{kind}'")
