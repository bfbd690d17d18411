"""jointvar: joint estimation of sparse VAR models across subjects.

Each subject's transition matrix is decomposed into penalized common and
unique effects, fit jointly by proximal gradient descent with adaptive
weights and penalties chosen by time-series cross-validation. Includes a
heterogeneous-data simulator and a Monte Carlo benchmark harness.
"""

from .var_core import (
    MultiSubjectSeries,
    RegressionForm,
    SubjectSeries,
    VarModel,
    build_regression,
    center,
    companion_matrix,
    fit_ols,
    is_stable,
    simulate_var,
    spectral_radius,
)
from .solver import (
    EffectsDecomposition,
    LambdaGrid,
    MultiVarProblem,
    PenaltySpec,
    SolverConfig,
    build_grid,
    fista_solve,
    fit_path,
    lambda_max,
    objective,
    prox_weighted_l1,
    solve_single,
)
from .cv import CvTable, FoldPlan, bcv_select, forecast_msfe, make_blocked_folds, rwcv_select
from .weights import (
    AdaptiveWeights,
    InitialEstimates,
    build_adaptive_weights,
    entrywise_weighted_median,
    initial_lasso,
    initial_ml,
    initial_ridge,
    ml_thresholded,
    single_lasso_cv,
)
from .simulator import (
    CONDITIONS,
    GeneratedDataset,
    HeterogeneitySpec,
    assign_supports,
    draw_coefficients,
    generate_common_unique,
    generate_dataset,
    rescale_to_stability,
)
from .metrics import (
    ConfusionCounts,
    MetricsReport,
    bias_rmse,
    confusion,
    evaluate,
    mcc,
    sensitivity_specificity,
)
from .methods import METHODS, FitOptions, FitResult, fit_method

__version__ = "0.1.0"

__all__ = [
    "AdaptiveWeights",
    "CONDITIONS",
    "ConfusionCounts",
    "CvTable",
    "EffectsDecomposition",
    "FitOptions",
    "FitResult",
    "FoldPlan",
    "GeneratedDataset",
    "HeterogeneitySpec",
    "InitialEstimates",
    "LambdaGrid",
    "METHODS",
    "MetricsReport",
    "MultiSubjectSeries",
    "MultiVarProblem",
    "PenaltySpec",
    "RegressionForm",
    "SolverConfig",
    "SubjectSeries",
    "VarModel",
    "assign_supports",
    "bcv_select",
    "bias_rmse",
    "build_adaptive_weights",
    "build_grid",
    "build_regression",
    "center",
    "companion_matrix",
    "confusion",
    "draw_coefficients",
    "entrywise_weighted_median",
    "evaluate",
    "fista_solve",
    "fit_method",
    "fit_ols",
    "fit_path",
    "forecast_msfe",
    "generate_common_unique",
    "generate_dataset",
    "initial_lasso",
    "initial_ml",
    "initial_ridge",
    "is_stable",
    "lambda_max",
    "make_blocked_folds",
    "mcc",
    "ml_thresholded",
    "objective",
    "prox_weighted_l1",
    "rescale_to_stability",
    "rwcv_select",
    "sensitivity_specificity",
    "simulate_var",
    "single_lasso_cv",
    "solve_single",
    "spectral_radius",
]
