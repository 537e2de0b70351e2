"""
Command line driver.

    python -m riskalloc.main solve --config run.json [--out report.csv] [--seed N] [--samples N]

Commands: solve, sweep, estimate, asymptotic, validate. Exit codes: 0 success,
1 configuration error, 2 solver error, 3 validation failure.
"""
import argparse
import logging
import math
import os
import sys
from typing import List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from riskalloc.errors import ConfigError, DomainError, RiskAllocError, TiedRiskiestBranch
from riskalloc.services.allocation_service.closed_form import (
    asymptotic_exponential_I,
    asymptotic_exponential_J,
    comonotonic_allocation,
    eizo_system,
    fgm_expanded_residual,
    fgm_residual,
    iloc_allocation,
    mixture_asymptotic_I_system,
    mixture_asymptotic_J_system,
    mo_residual,
    pareto_asymptotic_I_system,
    pareto_asymptotic_J,
    require_absolute,
    system_for,
)
from riskalloc.services.allocation_service.mirror_descent import MirrorSchedule, mirror_descent_minimize
from riskalloc.services.allocation_service.solvers import SolverConfig, solve_simplex, solve_simplex_detailed
from riskalloc.services.allocation_service.sweeps import SWEEP_COLUMNS, build_family, sweep
from riskalloc.services.distribution_service.joint_models import (
    Comonotonic,
    CorrelatedParetoMixture,
    FgmExponential,
    IndependentExponential,
    IndependentPareto,
    JointModel,
    MarshallOlkin,
    build_model,
)
from riskalloc.services.indicator_service import streams
from riskalloc.services.indicator_service.indicators import (
    INDICATOR_I_LOC,
    INDICATORS,
    SIDE_LOWER,
    SIDE_UPPER,
    Allocation,
    estimate_condition,
    estimate_indicator,
    sample_indicator_terms,
    stationarity_certificate,
)
from riskalloc.services.indicator_service.penalties import Penalty, build_penalty
from utils.config_manager import ConfigManager, RunConfig
from utils.logger import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VALIDATION = 3

# Sample cap for the per-sample identity checks of the validation suite
IDENTITY_SAMPLES = 1_000_000


class ValidationFailed(RiskAllocError):
    """At least one validation check failed."""

    def __init__(self, report: pd.DataFrame):
        super().__init__("validation failed: " + ", ".join(report.loc[~report["passed"], "check"]))
        self.report = report


def _model(config: RunConfig) -> JointModel:
    try:
        return build_model(config.model)
    except DomainError as e:
        raise ConfigError(f"invalid model section: {e}") from e


def _penalty(config: RunConfig) -> Penalty:
    try:
        return build_penalty(config.penalty)
    except DomainError as e:
        raise ConfigError(f"invalid penalty section: {e}") from e


def _schedule(config: RunConfig) -> MirrorSchedule:
    allowed = {"step", "width", "batch", "iterations"}
    unknown = set(config.mirror) - allowed
    if unknown:
        raise ConfigError(f"unknown mirror settings {sorted(unknown)}")
    try:
        return MirrorSchedule(**config.mirror)
    except (DomainError, TypeError) as e:
        raise ConfigError(f"invalid mirror section: {e}") from e


def _allocation_columns(d: int) -> List[str]:
    return [f"u_{k + 1}" for k in range(d)] + [f"alpha_{k + 1}" for k in range(d)]


def _allocation_row(method: str, alloc: Allocation, residual_norm: float) -> dict:
    row = {"method": method}
    for k, (c, a) in enumerate(zip(alloc.capitals, alloc.fractions)):
        row[f"u_{k + 1}"] = c
        row[f"alpha_{k + 1}"] = a
    row["residual_norm"] = residual_norm
    return row


def closed_form_allocation(model: JointModel, u: float, indicator: str, penalty: Penalty):
    """
    Closed-form optimum of a model and indicator.

    Returns:
        (Allocation, residual norm of the solved system)
    """
    try:
        require_absolute(penalty)
    except DomainError as e:
        raise ConfigError(f"{e}; use method monte_carlo for other penalties") from e
    if indicator == INDICATOR_I_LOC or isinstance(model, Comonotonic):
        alloc = iloc_allocation(model, u) if indicator == INDICATOR_I_LOC else comonotonic_allocation(model, u)
        levels = [m.cdf(c) for m, c in zip(model.marginals, alloc.capitals)]
        return alloc, float(max(levels) - min(levels))
    if isinstance(model, IndependentPareto):
        raise ConfigError("independent_pareto has no finite-capital system; use monte_carlo or the asymptotic command")
    try:
        system = system_for(model, u, indicator)
    except DomainError as e:
        raise ConfigError(str(e)) from e
    result = solve_simplex_detailed(system, SolverConfig())
    return Allocation.from_fractions(result.fractions, u), result.residual_norm


def cmd_solve(config: RunConfig) -> pd.DataFrame:
    """Optimal allocation by closed form, mirror descent or both."""
    model, penalty = _model(config), _penalty(config)
    rows = []
    allocations = {}
    if config.method in ("closed_form", "both"):
        alloc, norm = closed_form_allocation(model, config.capital, config.indicator, penalty)
        allocations["closed_form"] = alloc
        rows.append(_allocation_row("closed_form", alloc, norm))
    if config.method in ("monte_carlo", "both"):
        alloc = mirror_descent_minimize(model, config.capital, config.indicator, penalty,
                                        _schedule(config), config.seed)
        allocations["monte_carlo"] = alloc
        rows.append(_allocation_row("monte_carlo", alloc, math.nan))
    report = pd.DataFrame(rows, columns=["method"] + _allocation_columns(model.dimension) + ["residual_norm"])
    if len(allocations) == 2:
        gap = float(np.max(np.abs(allocations["closed_form"].as_array() - allocations["monte_carlo"].as_array())))
        report["oracle_gap"] = gap
        logger.info(f"Oracle gap between closed form and mirror descent: {gap:.4g}")
    return report


def cmd_sweep(config: RunConfig) -> pd.DataFrame:
    """Optimal fraction beta along the configured dependence grid."""
    if not config.sweep or "parameter" not in config.sweep:
        raise ConfigError("sweep command needs a sweep section with a parameter")
    try:
        require_absolute(_penalty(config))
        family = build_family(config.sweep["parameter"], config.model, config.capital, config.indicator)
    except DomainError as e:
        raise ConfigError(str(e)) from e
    table = sweep(family, config.grid)
    logger.info(f"Sweep over {config.sweep['parameter']}: {int((table['status'] == 'ok').sum())}/{len(table)} points solved")
    return table[SWEEP_COLUMNS]


def _evaluation_allocation(config: RunConfig, model: JointModel) -> Allocation:
    capitals = config.allocation
    if capitals is None:
        return iloc_allocation(model, config.capital)
    try:
        return Allocation(tuple(capitals), config.capital)
    except DomainError as e:
        raise ConfigError(f"invalid allocation: {e}") from e


def cmd_estimate(config: RunConfig) -> pd.DataFrame:
    """Monte Carlo I, J, I_loc and optimality-condition terms at one allocation."""
    model, penalty = _model(config), _penalty(config)
    alloc = _evaluation_allocation(config, model)
    rows = []
    for name in INDICATORS:
        est = estimate_indicator(model, alloc, name, penalty, config.samples, config.seed)
        rows.append({"quantity": name, "value": est.value, "std_error": est.std_error,
                     "n": est.n, "seed": est.seed})
    for side in (SIDE_LOWER, SIDE_UPPER):
        for i in range(model.dimension):
            est = estimate_condition(model, i, alloc, side, config.samples, config.seed, penalty)
            rows.append({"quantity": f"{side}_{i + 1}", "value": est.value, "std_error": est.std_error,
                         "n": est.n, "seed": est.seed})
    return pd.DataFrame(rows, columns=["quantity", "value", "std_error", "n", "seed"])


def asymptotic_fractions(model: JointModel, indicator: str) -> np.ndarray:
    """Large-capital allocation fractions of the models that have one."""
    if isinstance(model, IndependentExponential):
        return asymptotic_exponential_I(model.rates) if indicator == "I" else asymptotic_exponential_J(model.rates)
    if isinstance(model, IndependentPareto):
        if indicator == "I":
            return solve_simplex(pareto_asymptotic_I_system(model.shape, model.scales))
        return pareto_asymptotic_J(model.scales)
    if isinstance(model, CorrelatedParetoMixture):
        system = mixture_asymptotic_I_system(model) if indicator == "I" else mixture_asymptotic_J_system(model)
        return solve_simplex(system)
    raise ConfigError(f"no asymptotic allocation for model '{model.kind}'")


def cmd_asymptotic(config: RunConfig) -> pd.DataFrame:
    """Asymptotic I and J allocations as the group capital grows."""
    model = _model(config)
    columns = ["indicator"] + [f"alpha_{k + 1}" for k in range(model.dimension)] + ["status"]
    rows = []
    for indicator in ("I", "J"):
        row = {"indicator": indicator}
        try:
            fractions = asymptotic_fractions(model, indicator)
            row.update({f"alpha_{k + 1}": float(a) for k, a in enumerate(fractions)})
            row["status"] = "ok"
        except TiedRiskiestBranch as e:
            logger.warning(f"Asymptotic {indicator}: {e}")
            row["status"] = "tied"
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def _degeneracy_gap(residual, reference, grid) -> float:
    return max(abs(residual(b) - reference(b)) for b in grid)


def cmd_validate(config: RunConfig) -> pd.DataFrame:
    """
    Cross-checks: per-sample identities, stationarity of the closed-form root
    and the independence limits of the FGM and Marshall-Olkin residuals.

    Raises:
        ValidationFailed: carrying the report, when any check fails
    """
    model, penalty = _model(config), _penalty(config)
    settings = config.validation
    sigmas = float(settings.get("tolerance_sigmas", 4.0))
    exact_tol = float(settings.get("degeneracy_tolerance", 1e-9))
    u = config.capital
    rows = []

    def record(check: str, value: float, threshold: float):
        passed = bool(value <= threshold)
        rows.append({"check": check, "value": value, "threshold": threshold, "passed": passed})
        logger.info(f"{check}: {value:.4g} (threshold {threshold:g}) {'pass' if passed else 'FAIL'}")

    alloc = _evaluation_allocation(config, model)
    terms = sample_indicator_terms(model, alloc, min(config.samples, IDENTITY_SAMPLES), config.seed, penalty)
    record("identity_I_plus_J", float((terms["I"] + terms["J"] - terms["I_loc"]).abs().max()), 0.0)
    partition = max(float((terms[f"lower_{k}"] + terms[f"upper_{k}"] - terms[f"exceed_{k}"]).abs().max())
                    for k in range(model.dimension))
    record("partition_lower_upper", partition, 0.0)

    if config.indicator in ("I", "J") and penalty.is_absolute:
        try:
            root, _ = closed_form_allocation(model, u, config.indicator, penalty)
        except ConfigError:
            root = None
            logger.info(f"No closed form for {model.kind}; stationarity check skipped")
        if root is not None:
            certificate = stationarity_certificate(model, root, config.indicator, config.samples,
                                                   config.seed, sigmas, penalty)
            record("stationarity_max_z", certificate.max_z, sigmas)

    grid = np.linspace(0.01, 0.99, 99)
    beta1, beta2, capital = 0.05, 0.25, 50.0
    if isinstance(model, FgmExponential):
        beta1, beta2, capital = model.beta1, model.beta2, u
    eizo = eizo_system((beta1, beta2), capital)
    reference = lambda b: float(eizo.residual([b, 1.0 - b])[0])
    record("fgm_theta0_vs_independence",
           _degeneracy_gap(lambda b: fgm_residual(beta1, beta2, 0.0, capital, b), reference, grid), exact_tol)
    record("fgm_expanded_vs_exact",
           _degeneracy_gap(lambda b: fgm_expanded_residual(beta1, beta2, 0.5, capital, b),
                           lambda b: fgm_residual(beta1, beta2, 0.5, capital, b), grid), exact_tol)
    if isinstance(model, MarshallOlkin) and not model.singular and model.lambda1 != model.lambda2:
        lambda1, lambda2, capital = model.lambda1, model.lambda2, u
    else:
        lambda1, lambda2, capital = 0.05, 0.25, 50.0
    eizo = eizo_system((lambda1, lambda2), capital)
    record("mo_lambda0_vs_independence",
           _degeneracy_gap(lambda b: mo_residual(0.0, lambda1, lambda2, capital, b),
                           lambda b: float(eizo.residual([b, 1.0 - b])[0]), grid), exact_tol)

    report = pd.DataFrame(rows, columns=["check", "value", "threshold", "passed"])
    if not report["passed"].all():
        raise ValidationFailed(report)
    return report


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "estimate": cmd_estimate,
    "asymptotic": cmd_asymptotic,
    "validate": cmd_validate,
}


def write_report(report: pd.DataFrame, path: Optional[str]):
    """Write a report as CSV with '.' decimals and '\\n' line endings."""
    if not path:
        return
    report.to_csv(path, index=False, lineterminator="\n", float_format="%.12g")
    logger.info(f"Wrote {len(report)} rows to {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskalloc", description="Capital allocation by multivariate risk indicators")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="CSV output path (overrides the config output)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--samples", type=int, help="override the configured sample count")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(os.environ.get("RISKALLOC_LOG_LEVEL", "INFO").upper(),
                  os.environ.get("RISKALLOC_LOG_JSON", "false").lower() == "true")

    try:
        manager = ConfigManager(args.config)
        setup_logging(manager.LOG_LEVEL, manager.LOG_JSON)
        streams.use_config(manager)
        config = manager.run_config()
        if args.seed is not None:
            config.seed = args.seed
        if args.samples is not None:
            if args.samples < 1:
                raise ConfigError(f"--samples must be at least 1, got {args.samples}")
            config.samples = args.samples
    except (ConfigError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    out = args.out or config.output
    try:
        report = COMMANDS[args.command](config)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except ValidationFailed as e:
        logger.error(str(e))
        print(e.report.to_string(index=False))
        write_report(e.report, out)
        return EXIT_VALIDATION
    except RiskAllocError as e:
        logger.error(f"Solver error: {e}")
        return EXIT_SOLVER

    print(report.to_string(index=False))
    write_report(report, out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
