"""Spatio-temporal sparse VAR estimation with distance- and lag-weighted lasso penalties."""
from __future__ import annotations

from ._kernels import BACKEND
from .model import (
    CoefficientStack,
    LaggedRegression,
    VarModel,
    build_design,
    companion_matrix,
    forecast,
    is_stationary,
    one_step_forecasts,
    simulate,
    spectral_radius,
)
from .scenarios import ScenarioSpec, StudyConfig, generate_truth, run_study
from .selection import CvPlan, CvResult, forward_cv, rmsfe
from .solver import FitResult, LambdaGrid, WeightedLassoProblem, fit, fit_path, lambda_grid, lambda_max, threshold
from .spatial import SiteGeometry, uniform_weights, weight_tensor

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CoefficientStack",
    "CvPlan",
    "CvResult",
    "FitResult",
    "LaggedRegression",
    "LambdaGrid",
    "ScenarioSpec",
    "SiteGeometry",
    "StudyConfig",
    "VarModel",
    "WeightedLassoProblem",
    "build_design",
    "companion_matrix",
    "fit",
    "fit_path",
    "generate_truth",
    "forecast",
    "forward_cv",
    "is_stationary",
    "lambda_grid",
    "lambda_max",
    "one_step_forecasts",
    "rmsfe",
    "run_study",
    "simulate",
    "spectral_radius",
    "threshold",
    "uniform_weights",
    "weight_tensor",
]
