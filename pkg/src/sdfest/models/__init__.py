"""Panel estimators: adversarial SDF network, linear baselines, forecaster."""

from .beta import beta_from_linear, beta_from_network, estimate_beta
from .common import TrainingDivergedError, fit_masked_mse_ffn
from .forecast import FfnForecaster, ForecastModel
from .gan import (
    ConditionalModel,
    EnsembleModel,
    GanHyperParams,
    SdfGan,
    SdfModel,
    SearchBudgetError,
    factor_from_weights,
    gan_loss,
    hyperparameter_search,
    variable_importance,
)
from .io import CheckpointError, load_model, save_model
from .linear import (
    ConvergenceError,
    ElasticNetConfig,
    LinearSdf,
    LinearSdfModel,
    SingularMomentMatrixError,
    elastic_net_objective,
    fit_en,
    fit_ls,
    solve_elastic_net,
)

__all__ = [
    "beta_from_linear",
    "beta_from_network",
    "estimate_beta",
    "TrainingDivergedError",
    "fit_masked_mse_ffn",
    "FfnForecaster",
    "ForecastModel",
    "ConditionalModel",
    "EnsembleModel",
    "GanHyperParams",
    "SdfGan",
    "SdfModel",
    "SearchBudgetError",
    "factor_from_weights",
    "gan_loss",
    "hyperparameter_search",
    "variable_importance",
    "CheckpointError",
    "load_model",
    "save_model",
    "ConvergenceError",
    "ElasticNetConfig",
    "LinearSdf",
    "LinearSdfModel",
    "SingularMomentMatrixError",
    "elastic_net_objective",
    "fit_en",
    "fit_ls",
    "solve_elastic_net",
]
