"""Sparse logistic regression with design-dependent weighted l1 penalties."""
from .core import Coefficients, Dataset, SupportSet
from .solver import FitResult, SeparationError, SolverConfig, fit, fit_by_transform
from .tuning import cross_validate, lambda_max, loocv
from .weights import Scheme, WeightConfig, WeightVector, compute_weights, normalize

__all__ = [
    "Coefficients",
    "Dataset",
    "FitResult",
    "Scheme",
    "SeparationError",
    "SolverConfig",
    "SupportSet",
    "WeightConfig",
    "WeightVector",
    "compute_weights",
    "cross_validate",
    "fit",
    "fit_by_transform",
    "lambda_max",
    "loocv",
    "normalize",
]

__version__ = "0.1.0"
