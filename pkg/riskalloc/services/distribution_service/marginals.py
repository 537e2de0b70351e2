"""
Univariate loss distributions.

Every family exposes survival, cdf, density, quantile, inverse survival,
mean and a sampler driven by an explicit numpy Generator. Arrays in give
arrays out, scalars in give floats out.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, Sequence, Union

import numpy as np
from scipy import special, stats

from riskalloc.errors import DistinctRatesRequired, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Relative gap under which two exponential rates count as equal
RATE_TOLERANCE = 1e-9


def _as_output(x, value):
    """Return a float for scalar input and an array otherwise."""
    if np.ndim(x) == 0:
        return float(value)
    return np.asarray(value, dtype=float)


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be a positive finite number, got {value}")
    return value


def _check_probability(name: str, p: ArrayLike) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError(f"{name} must lie strictly inside (0, 1), got {p}")
    return arr


class Marginal(ABC):
    """A univariate nonnegative loss distribution."""

    family: ClassVar[str] = ""

    @abstractmethod
    def _survival(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _cdf(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _density(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _ppf(self, p: np.ndarray) -> np.ndarray:
        """Quantile without argument checks; p=0 maps to the lower support end."""

    @abstractmethod
    def _isf(self, q: np.ndarray) -> np.ndarray:
        """Inverse survival without argument checks."""

    @abstractmethod
    def mean(self) -> float:
        ...

    @abstractmethod
    def sample(self, stream: np.random.Generator, size: int) -> np.ndarray:
        ...

    def survival(self, x: ArrayLike):
        """P(X > x). Negative arguments return 1."""
        arr = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _as_output(x, np.clip(self._survival(arr), 0.0, 1.0))

    def cdf(self, x: ArrayLike):
        arr = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _as_output(x, np.clip(self._cdf(arr), 0.0, 1.0))

    def density(self, x: ArrayLike):
        arr = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = np.where(arr < 0.0, 0.0, self._density(np.maximum(arr, 0.0)))
        return _as_output(x, value)

    def quantile(self, p: ArrayLike):
        """
        Inverse of the cdf.

        Args:
            p: probability level(s), strictly inside (0, 1)

        Returns:
            The loss level x with cdf(x) = p.
        """
        arr = _check_probability("p", p)
        return _as_output(p, self._ppf(arr))

    def isf(self, q: ArrayLike):
        """Inverse of the survival function, accurate for tiny tail probabilities."""
        arr = _check_probability("q", q)
        return _as_output(q, self._isf(arr))


@dataclass(frozen=True)
class Exponential(Marginal):
    rate: float

    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "rate", _check_positive("rate", self.rate))

    def _survival(self, x):
        return np.exp(-self.rate * x)

    def _cdf(self, x):
        return -np.expm1(-self.rate * x)

    def _density(self, x):
        return self.rate * np.exp(-self.rate * x)

    def _ppf(self, p):
        return -np.log1p(-p) / self.rate

    def _isf(self, q):
        return -np.log(q) / self.rate

    def mean(self) -> float:
        return 1.0 / self.rate

    def sample(self, stream, size):
        return stream.standard_exponential(size) / self.rate


@dataclass(frozen=True)
class ParetoLomax(Marginal):
    """Pareto of the second kind with survival (1 + x/scale)^(-shape)."""

    shape: float
    scale: float

    family: ClassVar[str] = "pareto"

    def __post_init__(self):
        object.__setattr__(self, "shape", _check_positive("shape", self.shape))
        object.__setattr__(self, "scale", _check_positive("scale", self.scale))

    def _survival(self, x):
        return np.exp(-self.shape * np.log1p(x / self.scale))

    def _cdf(self, x):
        return -np.expm1(-self.shape * np.log1p(x / self.scale))

    def _density(self, x):
        return self.shape / self.scale * np.exp(-(self.shape + 1.0) * np.log1p(x / self.scale))

    def _ppf(self, p):
        return self.scale * np.expm1(-np.log1p(-p) / self.shape)

    def _isf(self, q):
        return self.scale * np.expm1(-np.log(q) / self.shape)

    def mean(self) -> float:
        if self.shape <= 1.0:
            return math.inf
        return self.scale / (self.shape - 1.0)

    def sample(self, stream, size):
        # numpy's pareto draws the Lomax law with unit scale
        return self.scale * stream.pareto(self.shape, size)


@dataclass(frozen=True)
class LogNormal(Marginal):
    mu: float
    sigma: float

    family: ClassVar[str] = "lognormal"

    def __post_init__(self):
        mu = float(self.mu)
        if not math.isfinite(mu):
            raise DomainError(f"mu must be finite, got {mu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", _check_positive("sigma", self.sigma))

    def _z(self, x):
        with np.errstate(divide="ignore"):
            return (np.log(x) - self.mu) / self.sigma

    def _survival(self, x):
        return special.ndtr(-self._z(x))

    def _cdf(self, x):
        return special.ndtr(self._z(x))

    def _density(self, x):
        return stats.lognorm.pdf(x, s=self.sigma, scale=math.exp(self.mu))

    def _ppf(self, p):
        return np.exp(self.mu + self.sigma * special.ndtri(p))

    def _isf(self, q):
        return np.exp(self.mu - self.sigma * special.ndtri(q))

    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma ** 2)

    def sample(self, stream, size):
        return stream.lognormal(self.mu, self.sigma, size)


@dataclass(frozen=True)
class Gamma(Marginal):
    """Gamma law with shape a and rate b."""

    shape: float
    rate: float

    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        object.__setattr__(self, "shape", _check_positive("shape", self.shape))
        object.__setattr__(self, "rate", _check_positive("rate", self.rate))

    def _survival(self, x):
        return special.gammaincc(self.shape, self.rate * x)

    def _cdf(self, x):
        return special.gammainc(self.shape, self.rate * x)

    def _density(self, x):
        return stats.gamma.pdf(x, self.shape, scale=1.0 / self.rate)

    def _ppf(self, p):
        return special.gammaincinv(self.shape, p) / self.rate

    def _isf(self, q):
        return special.gammainccinv(self.shape, q) / self.rate

    def mean(self) -> float:
        return self.shape / self.rate

    def sample(self, stream, size):
        return stream.gamma(self.shape, 1.0 / self.rate, size)


def survival(m: Marginal, x: ArrayLike):
    """P(X > x) for the marginal m."""
    return m.survival(x)


def quantile(m: Marginal, p: ArrayLike):
    """Quantile of m at level p; raises DomainError outside (0, 1)."""
    return m.quantile(p)


def check_distinct_rates(rates: Sequence[float]) -> np.ndarray:
    """
    Validate a vector of exponential rates for the generalized Erlang formulas.

    Args:
        rates: positive rates, pairwise distinct

    Returns:
        The rates as a float array.
    """
    arr = np.asarray(rates, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError("at least one rate is required")
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"rates must be positive and finite, got {list(arr)}")
    ordered = np.sort(arr)
    gaps = np.diff(ordered)
    if np.any(gaps <= RATE_TOLERANCE * ordered[1:]):
        raise DistinctRatesRequired(f"rates must be pairwise distinct, got {list(arr)}")
    return arr


def erlang_coefficients(rates: Sequence[float]) -> np.ndarray:
    """Weights A_l = prod_{j != l} b_j / (b_j - b_l) of the generalized Erlang survival."""
    beta = check_distinct_rates(rates)
    diff = beta[None, :] - beta[:, None]
    np.fill_diagonal(diff, 1.0)
    ratio = beta[None, :] / diff
    np.fill_diagonal(ratio, 1.0)
    return np.prod(ratio, axis=1)


def erlang_survival(rates: Sequence[float], x: ArrayLike):
    """Survival of a sum of independent exponentials with distinct rates."""
    beta = check_distinct_rates(rates)
    weights = erlang_coefficients(beta)
    arr = np.maximum(np.asarray(x, dtype=float), 0.0)
    value = np.exp(-np.multiply.outer(arr, beta)) @ weights
    return _as_output(x, np.clip(value, 0.0, 1.0))


def erlang_cdf(rates: Sequence[float], x: ArrayLike):
    """Cdf of the generalized Erlang law, summed through expm1 for small x."""
    beta = check_distinct_rates(rates)
    weights = erlang_coefficients(beta)
    arr = np.maximum(np.asarray(x, dtype=float), 0.0)
    value = -(np.expm1(-np.multiply.outer(arr, beta)) @ weights)
    return _as_output(x, np.clip(value, 0.0, 1.0))


def build_marginal(spec: dict) -> Marginal:
    """
    Build a marginal from a config mapping such as {"family": "pareto", "shape": 2, "scale": 1}.
    """
    family = str(spec.get("family", "")).lower()
    try:
        if family == Exponential.family:
            return Exponential(rate=spec["rate"])
        if family in (ParetoLomax.family, "lomax"):
            return ParetoLomax(shape=spec["shape"], scale=spec["scale"])
        if family == LogNormal.family:
            return LogNormal(mu=spec["mu"], sigma=spec["sigma"])
        if family == Gamma.family:
            return Gamma(shape=spec["shape"], rate=spec["rate"])
    except KeyError as e:
        raise DomainError(f"marginal '{family}' is missing parameter {e}") from e
    raise DomainError(f"unknown marginal family '{family}'")
