"""Differentially private stochastic optimization for heavy-tailed gradients."""

from .geometry import (
    Ball,
    LocalizedDomain,
    ProjectionError,
    clip_l2,
    median,
    project_ball,
    project_domain,
    project_intersection,
)
from .privacy import (
    AccountantLedger,
    ApproxDpBudget,
    ZcdpBudget,
    approx_dp_to_zcdp,
    compose_sequential,
    gaussian_noise,
    gaussian_sigma_squared,
    zcdp_to_approx_dp,
)
from .mean_oracles import (
    MomentAssumption,
    NoisyGradientEstimate,
    coordinate_mean_oracle,
    default_moment_grid,
    estimate_empirical_moment,
    mean_oracle1,
)
from .shuffle_protocols import (
    ClientReport,
    P1dParams,
    analyze_1d,
    derive_p1d_params,
    p_vec,
    randomize_1d,
    run_p1d,
    shuffle,
    shuffle_mean_oracle1,
    shuffle_mean_oracle2,
)
from .losses import (
    CompositeLassoLoss,
    ProblemInstance,
    ProxOperator,
    SmoothWithProx,
    bernoulli_product,
    composite_lasso_loss,
    evaluate_excess_risk,
    linear_instance,
    linear_loss,
    linreg_loss,
    load_dataset_csv,
    pareto_tail,
    quadratic_instance,
    quadratic_loss,
    save_dataset_csv,
    soft_threshold,
    symmetric_pareto,
    truncated_normal,
)
from .optimizers import (
    OptimizerConfig,
    OracleSpec,
    RunTrace,
    acsa,
    clipped_regularized_subgradient,
    clipped_sgd_sc,
    localized_sco,
    prox_clipped_sgd,
    strongly_convex_sco,
)
from .harness import (
    ExperimentConfig,
    ExperimentRecord,
    emit_plot,
    fit_loglog_slope,
    run_sweep,
    write_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
