"""
Deterministic root solvers for optimality systems.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from riskalloc.errors import BracketError, ConvergenceError, DomainError
from riskalloc.services.allocation_service.closed_form import ResidualSystem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """
    Attributes:
        abs_tol: tolerance on the balanced residual (log T_1 - log T_j)
        max_iter: Newton iterations, also the bracketed-solver iteration cap
        newton_damping: initial step fraction; halved while the residual grows
        fd_step: central-difference step of the numeric Jacobian
        clamp: distance kept from the simplex faces
    """

    abs_tol: float = 1e-10
    max_iter: int = 200
    newton_damping: float = 1.0
    fd_step: float = 1e-6
    clamp: float = 1e-12

    def __post_init__(self):
        if not self.abs_tol > 0.0:
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be at least 1, got {self.max_iter}")
        if not 0.0 < self.newton_damping <= 1.0:
            raise DomainError(f"newton_damping must lie in (0, 1], got {self.newton_damping}")


@dataclass(frozen=True)
class SolveResult:
    fractions: Tuple[float, ...]
    residual_norm: float
    balanced_norm: float
    iterations: int
    method: str

    def as_array(self) -> np.ndarray:
        return np.asarray(self.fractions)


def solve_bracketed(residual: Callable[[float], float], lo: float, hi: float,
                    config: Optional[SolverConfig] = None) -> float:
    """
    Root of a continuous scalar function that changes sign on [lo, hi].

    Args:
        residual: scalar function
        lo: left end of the bracket
        hi: right end of the bracket
        config: solver tolerances

    Returns:
        x with |residual(x)| <= abs_tol or a final bracket narrower than abs_tol.
    """
    config = config or SolverConfig()
    f_lo, f_hi = residual(lo), residual(hi)
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)):
        raise BracketError(f"residual not finite at the bracket ends: f({lo})={f_lo}, f({hi})={f_hi}")
    if f_lo == 0.0:
        return float(lo)
    if f_hi == 0.0:
        return float(hi)
    if f_lo * f_hi > 0.0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}")
    root, info = brentq(residual, lo, hi, xtol=min(config.abs_tol, 1e-14),
                        rtol=4 * np.finfo(float).eps, maxiter=max(config.max_iter, 100),
                        full_output=True, disp=False)
    if not info.converged:
        raise ConvergenceError(f"bracketed solve stopped: {info.flag}", [root], abs(residual(root)))
    return float(root)


def project_interior(alpha: np.ndarray, clamp: float) -> np.ndarray:
    """Clip each fraction to [clamp, 1 - clamp] and renormalise."""
    alpha = np.clip(np.asarray(alpha, dtype=float), clamp, 1.0 - clamp)
    return alpha / alpha.sum()


def _norm(values: np.ndarray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


def _result(system: ResidualSystem, alpha: np.ndarray, iterations: int, method: str) -> SolveResult:
    alpha = np.asarray(alpha, dtype=float)
    if system.known_root is not None:
        residual_norm = balanced_norm = 0.0
    else:
        residual_norm = _norm(system.residual(alpha))
        balanced_norm = _norm(system.balanced(alpha))
    return SolveResult(tuple(float(a) for a in alpha), residual_norm, balanced_norm, iterations, method)


def _solve_pair(system: ResidualSystem, config: SolverConfig) -> SolveResult:
    def balanced(a: float) -> float:
        return float(system.balanced(np.array([a, 1.0 - a]))[0])

    root = solve_bracketed(balanced, config.clamp, 1.0 - config.clamp, config)
    return _result(system, np.array([root, 1.0 - root]), 1, "bracketed")


def _newton(system: ResidualSystem, config: SolverConfig) -> Tuple[np.ndarray, float, int, bool]:
    """
    Damped Newton on the first d-1 fractions; the last one closes the simplex.
    """
    d = system.dimension

    def full(x: np.ndarray) -> np.ndarray:
        return project_interior(np.append(x, 1.0 - x.sum()), config.clamp)

    def balanced(x: np.ndarray) -> np.ndarray:
        return system.balanced(full(x))

    x = np.full(d - 1, 1.0 / d)
    r = balanced(x)
    norm = _norm(r)
    h = config.fd_step
    for iteration in range(1, config.max_iter + 1):
        if not np.all(np.isfinite(r)):
            return full(x), math.inf, iteration, False
        if norm <= config.abs_tol:
            return full(x), norm, iteration, True
        jacobian = np.empty((d - 1, d - 1))
        for j in range(d - 1):
            step = np.zeros(d - 1)
            step[j] = h
            jacobian[:, j] = (balanced(x + step) - balanced(x - step)) / (2.0 * h)
        try:
            direction = np.linalg.solve(jacobian, -r)
        except np.linalg.LinAlgError:
            logger.debug(f"{system.name}: singular Jacobian at iteration {iteration}")
            return full(x), norm, iteration, False
        damping = config.newton_damping
        while True:
            candidate = full(x + damping * direction)[:-1]
            r_candidate = balanced(candidate)
            norm_candidate = _norm(r_candidate)
            if norm_candidate < norm or damping < 1e-6:
                break
            damping /= 2.0
        if not norm_candidate < norm:
            logger.debug(f"{system.name}: Newton stalled at residual {norm:.3e}")
            return full(x), norm, iteration, False
        x, r, norm = candidate, r_candidate, norm_candidate
        logger.debug(f"{system.name}: iteration {iteration}, residual {norm:.3e}, damping {damping:g}")
    return full(x), norm, config.max_iter, norm <= config.abs_tol


def _branch_level(system: ResidualSystem, i: int, level: float, lo: float, hi: float) -> float:
    """Fraction at which log T_i crosses the level; the ends when it never does."""
    top = system.log_term(i, lo)
    bottom = system.log_term(i, hi)
    if level >= top:
        return lo
    if level <= bottom:
        return hi
    return brentq(lambda a: system.log_term(i, a) - level, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def solve_level_set(system: ResidualSystem, config: Optional[SolverConfig] = None) -> SolveResult:
    """
    Solve a separable decreasing system by bisection on the common level t of
    log T_i: each branch fraction alpha_i(t) is found separately and t is
    adjusted until the fractions sum to one.
    """
    config = config or SolverConfig()
    lo, hi = config.clamp, 1.0 - config.clamp
    d = system.dimension
    tops = [system.log_term(i, lo) for i in range(d)]
    bottoms = [system.log_term(i, hi) for i in range(d)]

    def fractions(level: float) -> np.ndarray:
        return np.array([_branch_level(system, i, level, lo, hi) for i in range(d)])

    def excess(level: float) -> float:
        return float(fractions(level).sum()) - 1.0

    level = solve_bracketed(excess, min(bottoms), max(tops), config)
    alpha = fractions(level)
    return _result(system, alpha / alpha.sum(), 1, "level_set")


def solve_simplex_detailed(system: ResidualSystem, config: Optional[SolverConfig] = None) -> SolveResult:
    """
    Root of an optimality system on the open simplex, with diagnostics.

    Pairs are solved by bracketing on beta = alpha_1. Larger systems use
    damped Newton from the uniform point and fall back to level-set bisection.

    Raises:
        ConvergenceError: neither method reached the tolerance
    """
    config = config or SolverConfig()
    if system.dimension < 2:
        raise DomainError(f"system dimension must be at least 2, got {system.dimension}")
    if system.known_root is not None:
        return _result(system, np.asarray(system.known_root), 0, "known_root")
    if system.dimension == 2:
        return _solve_pair(system, config)

    alpha, norm, iterations, converged = _newton(system, config)
    if converged:
        return _result(system, alpha, iterations, "newton")
    logger.warning(f"{system.name}: Newton did not converge (residual {norm:.3e}); using level-set bisection")
    try:
        result = solve_level_set(system, config)
    except (BracketError, ConvergenceError) as e:
        raise ConvergenceError(f"{system.name}: no solver converged ({e})", alpha, norm) from e
    if result.balanced_norm > max(config.abs_tol, 1e-8):
        raise ConvergenceError(f"{system.name}: level-set bisection left residual {result.balanced_norm:.3e}",
                               result.fractions, result.balanced_norm)
    return result


def solve_simplex(system: ResidualSystem, config: Optional[SolverConfig] = None) -> np.ndarray:
    """Fractions alpha on the simplex solving the system."""
    return solve_simplex_detailed(system, config).as_array()
