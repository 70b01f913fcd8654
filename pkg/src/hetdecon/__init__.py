"""Kernel density deconvolution under heteroscedastic measurement error."""

from .bandwidth import (
    PluginConfig,
    PluginEngine,
    PluginTrace,
    default_h_grid,
    minimize_amise,
    plugin_bandwidth,
    select_stage_bandwidth,
)
from .errors import (
    Averaged,
    Degenerate,
    EmpiricalSymmetric,
    ErrorModel,
    HetSample,
    Laplace,
    Normal,
    ReplicatedSample,
    StableSymmetric,
    averaged_model,
    cf_sum_sq,
    char_fn,
    consistency_diagnostic,
    empirical_error_cf,
    error_moments,
    estimate_error_variance,
    estimate_linear_variance_param,
    identify_linear_variance,
    parse_models_config,
)
from .estimator import (
    DensityEstimate,
    EstimatorConfig,
    estimate_density,
    phi_hat_ridge,
    phi_n,
    postprocess_density,
    psi_n,
)
from .kernels import K2, SINC, Kernel, get_kernel, kernel_eval, kernel_moment, kft_eval
from .quadrature import ComplexFunctionTable, QuadratureSpec, empirical_cf, integrate
from .risk import (
    NormalMixture,
    RiskReport,
    abias_theta,
    amise,
    estimate_sigma_x,
    exact_mise,
    normal_theta,
    rn_term,
    theta_hat,
    theta_normal_ref,
)
from .simulation import (
    ExperimentResult,
    QuantileBands,
    Scenario,
    build_scenario,
    density_spec,
    ise,
    replicate_mix,
    run_experiment,
)

__version__ = "0.1.0"
