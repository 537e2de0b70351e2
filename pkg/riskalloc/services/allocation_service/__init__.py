# Allocation: closed-form systems, root solvers, mirror descent and sweeps

from riskalloc.services.allocation_service.closed_form import (
    ResidualSystem,
    asymptotic_exponential_I,
    asymptotic_exponential_J,
    comonotonic_allocation,
    eizo_system,
    eizv_system,
    equal_rate_allocation,
    exponential_system,
    fgm_expanded_residual,
    fgm_residual,
    fgm_system,
    iloc_allocation,
    independent_pareto_asymptotic_I_system,
    mixture_asymptotic_I_system,
    mixture_asymptotic_J_system,
    mixture_I_system,
    mixture_J_system,
    mo_residual,
    mo_system,
    pareto_asymptotic_I_system,
    pareto_asymptotic_J,
    system_for,
)
from riskalloc.services.allocation_service.solvers import (
    SolveResult,
    SolverConfig,
    solve_bracketed,
    solve_level_set,
    solve_simplex,
    solve_simplex_detailed,
)
from riskalloc.services.allocation_service.mirror_descent import (
    MirrorDescentMinimizer,
    MirrorSchedule,
    mirror_descent_minimize,
)
from riskalloc.services.allocation_service.sweeps import (
    MESSAGE_COLUMN,
    SWEEP_COLUMNS,
    build_family,
    fgm_theta_family,
    mo_lambda0_family,
    sweep,
)
