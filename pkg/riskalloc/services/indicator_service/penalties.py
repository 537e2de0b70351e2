"""
Branch penalty functions g applied to negative reserves u_k - X_k.
"""
import logging
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable, Dict

import numpy as np

from riskalloc.errors import DomainError

logger = logging.getLogger(__name__)

_CHECK_GRID = np.linspace(-10.0, 0.0, 201)


def _absolute(x):
    return np.abs(x)


def _absolute_prime(x):
    return np.where(np.asarray(x) < 0.0, -1.0, 1.0)


def _power(x, p):
    return np.abs(x) ** p


def _power_prime(x, p):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.0, -p * np.abs(x) ** (p - 1.0), 0.0)


@dataclass(frozen=True)
class Penalty:
    """
    Cost g of a branch deficit together with its derivative.

    g is evaluated on nonpositive reserves only; it must vanish at 0 and be
    nonnegative and convex there. The checks run on a grid over [-10, 0].
    """

    name: str
    g: Callable[[np.ndarray], np.ndarray]
    g_prime: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        values = np.asarray(self.g(_CHECK_GRID), dtype=float)
        scale = 1.0 + float(np.max(np.abs(values)))
        if abs(float(self.g(np.array([0.0]))[0])) > 1e-12:
            raise DomainError(f"penalty '{self.name}' must vanish at 0")
        if np.any(values < -1e-12 * scale):
            raise DomainError(f"penalty '{self.name}' must be nonnegative on negative reserves")
        if np.any(np.diff(values, 2) < -1e-9 * scale):
            raise DomainError(f"penalty '{self.name}' must be convex")

    @property
    def is_absolute(self) -> bool:
        return self.name == "absolute"

    def cost(self, reserves: np.ndarray) -> np.ndarray:
        """g(min(reserve, 0)): zero for solvent branches."""
        return self.g(np.minimum(reserves, 0.0))

    def marginal_cost(self, reserves: np.ndarray) -> np.ndarray:
        """-g'(reserve) where the branch is ruined, 0 elsewhere."""
        ruined = reserves < 0.0
        return np.where(ruined, -self.g_prime(np.minimum(reserves, 0.0)), 0.0)

    @classmethod
    def absolute(cls) -> "Penalty":
        return cls("absolute", _absolute, _absolute_prime)

    @classmethod
    def power(cls, p: float) -> "Penalty":
        p = float(p)
        if p < 1.0:
            raise DomainError(f"power penalty needs p >= 1, got {p}")
        if p == 1.0:
            return cls.absolute()
        return cls(f"power_{p:g}", partial(_power, p=p), partial(_power_prime, p=p))


def build_penalty(spec: Dict[str, Any] = None) -> Penalty:
    """Penalty from a config mapping such as {"kind": "power", "p": 2}."""
    spec = spec or {}
    kind = str(spec.get("kind", "absolute")).lower()
    if kind == "absolute":
        return Penalty.absolute()
    if kind == "power":
        return Penalty.power(spec.get("p", 2.0))
    raise DomainError(f"unknown penalty kind '{kind}'")
