# Loss distributions: univariate marginals and dependent joint models

from riskalloc.services.distribution_service.marginals import (
    Exponential,
    Gamma,
    LogNormal,
    Marginal,
    ParetoLomax,
    build_marginal,
    erlang_cdf,
    erlang_coefficients,
    erlang_survival,
    quantile,
    survival,
)
from riskalloc.services.distribution_service.joint_models import (
    Comonotonic,
    CorrelatedParetoMixture,
    FgmExponential,
    IndependentExponential,
    IndependentPareto,
    JointModel,
    MarshallOlkin,
    build_model,
    exp_joint_lower_prob,
    fgm_joint_cdf_x1_s,
    fgm_joint_cdf_x2_s,
    mixture_joint_lower_prob,
    mo_joint_cdf_x1_s,
    mo_joint_cdf_x2_s,
    sample_matrix,
    sample_vector,
)
