"""
Dependence sweeps: the optimal fraction beta = u_1 / u of a bivariate model
as one dependence parameter moves along a grid.
"""
import logging
from typing import Any, Callable, Dict, Iterable, Optional

import numpy as np
import pandas as pd

from riskalloc.errors import DomainError, RiskAllocError
from riskalloc.services.allocation_service.closed_form import ResidualSystem, fgm_system, mo_system
from riskalloc.services.allocation_service.solvers import SolverConfig, solve_simplex_detailed
from riskalloc.services.distribution_service.joint_models import FgmExponential, MarshallOlkin

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["parameter", "beta_frac", "residual_norm", "status"]
MESSAGE_COLUMN = "message"

STATUS_OK = "ok"
STATUS_ERROR = "error"

MO_FIXED_MARGINALS = "fixed_marginals"
MO_FIXED_SHOCKS = "fixed_shocks"

SystemFamily = Callable[[float], ResidualSystem]


def fgm_theta_family(beta1: float, beta2: float, u: float, indicator: str = "I") -> SystemFamily:
    """FGM systems indexed by theta."""
    return lambda theta: fgm_system(FgmExponential(beta1, beta2, theta), u, indicator)


def mo_lambda0_family(u: float, mode: str = MO_FIXED_MARGINALS, beta1: Optional[float] = None,
                      beta2: Optional[float] = None, lambda1: Optional[float] = None,
                      lambda2: Optional[float] = None, indicator: str = "I") -> SystemFamily:
    """
    Marshall-Olkin systems indexed by the shock rate lambda0.

    Args:
        u: group capital
        mode: "fixed_marginals" keeps the marginal rates beta_i and sets
            lambda_i = beta_i - lambda0; "fixed_shocks" keeps lambda_1, lambda_2
        beta1, beta2: marginal rates for fixed_marginals
        lambda1, lambda2: own-shock rates for fixed_shocks
        indicator: "I" or "J"
    """
    if mode == MO_FIXED_MARGINALS:
        if beta1 is None or beta2 is None:
            raise DomainError("fixed_marginals sweeps need beta1 and beta2")
        return lambda lambda0: mo_system(MarshallOlkin(lambda0, beta1 - lambda0, beta2 - lambda0), u, indicator)
    if mode == MO_FIXED_SHOCKS:
        if lambda1 is None or lambda2 is None:
            raise DomainError("fixed_shocks sweeps need lambda1 and lambda2")
        return lambda lambda0: mo_system(MarshallOlkin(lambda0, lambda1, lambda2), u, indicator)
    raise DomainError(f"unknown Marshall-Olkin sweep mode '{mode}'")


def sweep(family: SystemFamily, grid: Iterable[float], config: Optional[SolverConfig] = None) -> pd.DataFrame:
    """
    Solve one system per grid point, in grid order.

    Failures at a grid point become a row with status "error" and the error text
    in message; the sweep goes on.

    Returns:
        DataFrame with columns parameter, beta_frac, residual_norm, status, message.
    """
    config = config or SolverConfig()
    rows = []
    for value in grid:
        value = float(value)
        try:
            result = solve_simplex_detailed(family(value), config)
            rows.append({"parameter": value, "beta_frac": result.fractions[0],
                         "residual_norm": result.residual_norm, "status": STATUS_OK, MESSAGE_COLUMN: ""})
        except RiskAllocError as e:
            logger.warning(f"Sweep point {value}: {e}")
            rows.append({"parameter": value, "beta_frac": np.nan,
                         "residual_norm": np.nan, "status": STATUS_ERROR, MESSAGE_COLUMN: str(e)})
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS + [MESSAGE_COLUMN])


def build_family(parameter: str, model_spec: Dict[str, Any], u: float, indicator: str = "I") -> SystemFamily:
    """
    System family from a sweep parameter name and the model section of a run config.
    """
    kind = model_spec.get("kind")
    try:
        if parameter == "theta" and kind == FgmExponential.kind:
            return fgm_theta_family(model_spec["beta1"], model_spec["beta2"], u, indicator)
        if parameter == "lambda0" and kind == MarshallOlkin.kind:
            mode = model_spec.get("mode", MO_FIXED_MARGINALS)
            return mo_lambda0_family(u, mode, beta1=model_spec.get("beta1"), beta2=model_spec.get("beta2"),
                                     lambda1=model_spec.get("lambda1"), lambda2=model_spec.get("lambda2"),
                                     indicator=indicator)
    except KeyError as e:
        raise DomainError(f"sweep over {parameter} is missing model parameter {e}") from e
    raise DomainError(f"cannot sweep '{parameter}' for model '{kind}'")
