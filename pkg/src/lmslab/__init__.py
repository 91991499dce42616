"""Averaged and accelerated stochastic gradient for least squares.

Simulation of the regularized first-order and momentum recursions under
three gradient oracles, exact closed-form expected risk curves for the
additive Gaussian oracle, and calculators for the finite-horizon
convergence guarantees that go with them.
"""

__version__ = "0.1.0"

from .analytic import (
    AnalyticResult,
    BoundValue,
    UnsupportedRegimeError,
    bound_av_tighter,
    bound_cor1,
    bound_cor2,
    bound_lemma1,
    bound_lemma1_variants,
    bound_th1,
    bound_th2,
    bound_th3,
    exact_acc_risk_moment,
    exact_acc_risk_spectral,
    exact_avsgd_risk,
    rate_th5,
    rate_th6,
)
from .harness import (
    SUMMARY_HEADER,
    CellSummary,
    ComparisonReport,
    ExperimentCell,
    ExperimentResult,
    ExperimentSpec,
    Fig1Result,
    RateFit,
    RateMapRow,
    analytic_to_record,
    compare_mc_to_oracle,
    fig1_experiment,
    fit_rate,
    rate_map,
    run_experiment,
    summarize_cell,
    write_plot_data,
    write_summary_csv,
)
from .linalg import KahanSum, excess_risk, quad_form, trace_power
from .oracles import (
    Observation,
    OracleKind,
    additive_gaussian_gradient,
    additive_gradient,
    replication_rng,
    sample_observation,
    stochastic_gradient,
)
from .problems import (
    SourceCondition,
    SpectralProblem,
    effective_constants,
    estimate_kurtosis_bound,
    load_problem,
    make_fig1_problem,
    make_source_problem,
    rotation_matrix,
    save_problem,
    to_dense,
)
from .solvers import (
    ACCELERATED,
    ALGORITHMS,
    CSV_HEADER,
    REGIMES,
    ConfigurationError,
    NumericAbort,
    RunRecord,
    SolverConfig,
    SolverState,
    acc_step,
    append_records_csv,
    checkpoint_grid,
    default_params,
    effective_delta,
    extrapolate,
    init_state,
    momentum_lower_endpoint,
    primary_risk_column,
    run,
    run_batch,
    sgd_step,
    update_averages,
    validate_config,
)

__all__ = [
    "__version__",
    "AnalyticResult",
    "BoundValue",
    "UnsupportedRegimeError",
    "bound_av_tighter",
    "bound_cor1",
    "bound_cor2",
    "bound_lemma1",
    "bound_lemma1_variants",
    "bound_th1",
    "bound_th2",
    "bound_th3",
    "exact_acc_risk_moment",
    "exact_acc_risk_spectral",
    "exact_avsgd_risk",
    "rate_th5",
    "rate_th6",
    "SUMMARY_HEADER",
    "CellSummary",
    "ComparisonReport",
    "ExperimentCell",
    "ExperimentResult",
    "ExperimentSpec",
    "Fig1Result",
    "RateFit",
    "RateMapRow",
    "analytic_to_record",
    "compare_mc_to_oracle",
    "fig1_experiment",
    "fit_rate",
    "rate_map",
    "run_experiment",
    "summarize_cell",
    "write_plot_data",
    "write_summary_csv",
    "KahanSum",
    "excess_risk",
    "quad_form",
    "trace_power",
    "Observation",
    "OracleKind",
    "additive_gaussian_gradient",
    "additive_gradient",
    "replication_rng",
    "sample_observation",
    "stochastic_gradient",
    "SourceCondition",
    "SpectralProblem",
    "effective_constants",
    "estimate_kurtosis_bound",
    "load_problem",
    "make_fig1_problem",
    "make_source_problem",
    "rotation_matrix",
    "save_problem",
    "to_dense",
    "ACCELERATED",
    "ALGORITHMS",
    "CSV_HEADER",
    "REGIMES",
    "ConfigurationError",
    "NumericAbort",
    "RunRecord",
    "SolverConfig",
    "SolverState",
    "acc_step",
    "append_records_csv",
    "checkpoint_grid",
    "default_params",
    "effective_delta",
    "extrapolate",
    "init_state",
    "momentum_lower_endpoint",
    "primary_risk_column",
    "run",
    "run_batch",
    "sgd_step",
    "update_averages",
    "validate_config",
]
