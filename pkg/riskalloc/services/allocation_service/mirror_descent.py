"""
Stochastic entropic mirror descent on the simplex.

Each iteration estimates the gradient of the Monte Carlo indicator by
central finite differences on a fresh batch of loss vectors, shared by all
perturbed evaluations of that iteration, and takes a multiplicative step.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from riskalloc.errors import DomainError
from riskalloc.services.distribution_service.joint_models import JointModel
from riskalloc.services.indicator_service.indicators import INDICATORS, Allocation, indicator_samples
from riskalloc.services.indicator_service.penalties import Penalty
from riskalloc.services.indicator_service.streams import draw_losses

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MirrorSchedule:
    """
    Step c/n, finite-difference width c' n^(-1/4), batch size and iteration count.
    width=None means c' = 0.1 u.
    """

    step: float = 1.0
    width: Optional[float] = None
    batch: int = 10_000
    iterations: int = 2000
    clamp: float = 1e-12

    def __post_init__(self):
        if not self.step > 0.0:
            raise DomainError(f"step must be positive, got {self.step}")
        if self.width is not None and not self.width > 0.0:
            raise DomainError(f"width must be positive, got {self.width}")
        if self.batch < 1 or self.iterations < 1:
            raise DomainError("batch and iterations must be positive")

    def width_for(self, u: float) -> float:
        return self.width if self.width is not None else 0.1 * u


class MirrorDescentMinimizer:
    """Kiefer-Wolfowitz mirror descent for one model, capital and indicator."""

    def __init__(self, model: JointModel, u: float, indicator: str = "I",
                 penalty: Optional[Penalty] = None, schedule: Optional[MirrorSchedule] = None,
                 seed: int = 0):
        if not u > 0.0:
            raise DomainError(f"capital u must be positive, got {u}")
        if indicator not in INDICATORS:
            raise DomainError(f"unknown indicator {indicator!r}; expected one of {INDICATORS}")
        self.model = model
        self.u = float(u)
        self.indicator = indicator
        self.penalty = penalty or Penalty.absolute()
        self.schedule = schedule or MirrorSchedule()
        self.seed = int(seed)
        self.fractions = np.full(model.dimension, 1.0 / model.dimension)

    def gradient(self, fractions: np.ndarray, iteration: int) -> np.ndarray:
        """Central-difference gradient in capital units on the iteration's batch."""
        losses = draw_losses(self.model, self.schedule.batch, self.seed, stream=iteration, cache=False)
        capitals = fractions * self.u
        width = self.schedule.width_for(self.u) * iteration ** -0.25
        grad = np.empty(self.model.dimension)
        for i in range(self.model.dimension):
            shift = np.zeros(self.model.dimension)
            shift[i] = width
            up = indicator_samples(losses, capitals + shift, self.u, self.indicator, self.penalty).mean()
            down = indicator_samples(losses, capitals - shift, self.u, self.indicator, self.penalty).mean()
            grad[i] = (up - down) / (2.0 * width)
        return grad

    def step(self, fractions: np.ndarray, iteration: int) -> np.ndarray:
        """One multiplicative-weights update; the gradient in fractions is u times the capital gradient."""
        gamma = self.schedule.step / iteration
        logits = np.log(fractions) - gamma * self.u * self.gradient(fractions, iteration)
        logits -= logits.max()
        weights = np.exp(logits)
        updated = np.maximum(weights / weights.sum(), self.schedule.clamp)
        return updated / updated.sum()

    def optimize(self) -> Allocation:
        """Run the schedule and return the average of the second half of the iterates."""
        total = self.schedule.iterations
        start = total // 2 + 1
        running = np.zeros(self.model.dimension)
        fractions = self.fractions
        for iteration in range(1, total + 1):
            fractions = self.step(fractions, iteration)
            if iteration >= start:
                running += fractions
            if iteration % 500 == 0:
                logger.debug(f"Mirror descent iteration {iteration}: {list(fractions * self.u)}")
        self.fractions = fractions
        average = running / (total - start + 1)
        allocation = Allocation.from_fractions(average, self.u)
        logger.info(f"Mirror descent on {self.model.kind} ({self.indicator}) after {total} iterations: "
                    f"{list(allocation.capitals)}")
        return allocation


def mirror_descent_minimize(model: JointModel, u: float, indicator: str = "I",
                            penalty: Optional[Penalty] = None,
                            schedule: Optional[MirrorSchedule] = None,
                            seed: int = 0) -> Allocation:
    """
    Minimise the Monte Carlo indicator over allocations of u.

    Args:
        model: joint loss model
        u: group capital
        indicator: "I", "J" or "I_loc"
        penalty: branch penalty, |x| by default
        schedule: step, width, batch and iteration settings
        seed: stream seed; iteration n draws stream n

    Returns:
        The Polyak-averaged allocation, deterministic for a fixed seed.
    """
    return MirrorDescentMinimizer(model, u, indicator, penalty, schedule, seed).optimize()
