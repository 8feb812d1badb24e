"""Least-squares PDE solving with two-layer cubic-ReLU networks and NTK diagnostics."""

__version__ = "0.1.0"

from .activation import sigma, sigma_p, sigma_pp, sigma_ppp
from .barron import BarronRepresentation, approximation_experiment, barron_norm, sample_network
from .boundary import (
    BoundaryAugmentation,
    TransformedProblem,
    dirichlet_augmentation,
    lift_time_dependent,
    mixed_augmentation,
    neumann_augmentation,
    transform_operator,
)
from .estimator import LeastSquaresPDERegressor, NTKFeatureMap
from .operator import (
    CoefficientField,
    PdeProblem,
    SampleSet,
    TwoLayerParams,
    empirical_risk,
    eval_L_phi,
    eval_phi,
    grad_risk,
    path_norm,
    population_risk_mc,
)
from .training import TrainConfig, TrainingTrace, asi_init, gd_step, init_params, train

__all__ = [
    "BarronRepresentation", "BoundaryAugmentation", "CoefficientField", "LeastSquaresPDERegressor",
    "NTKFeatureMap", "PdeProblem", "SampleSet", "TrainConfig", "TrainingTrace", "TransformedProblem",
    "TwoLayerParams", "approximation_experiment", "asi_init", "barron_norm", "dirichlet_augmentation",
    "empirical_risk", "eval_L_phi", "eval_phi", "gd_step", "grad_risk", "init_params",
    "lift_time_dependent", "mixed_augmentation", "neumann_augmentation", "path_norm",
    "population_risk_mc", "sample_network", "sigma", "sigma_p", "sigma_pp", "sigma_ppp",
    "train", "transform_operator",
]
