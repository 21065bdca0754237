"""Multilayer opinion dynamics with state-dependent information sources."""
from .calibration import WaveData, alpha_from_waves, calibrate, lambda_from_covariance, normalize_adjacency
from .catalog import CATALOG, CatalogEntry, catalog_rule
from .design import DesignResult, ScenarioSpec, delta_percent, objective, optimize, subset_search
from .dynamics import Trajectory, residual, simulate, step
from .fixedpoint import bounds, closed_form, resolvent, solve_affine_exact
from .io import load_model, save_model
from .model import (
    AffineRule,
    AssumptionError,
    BoundedConfidenceRule,
    CustomBoundedRule,
    ModelError,
    MultilayerModel,
    SubStochasticError,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AffineRule", "AssumptionError", "BoundedConfidenceRule", "CATALOG", "CatalogEntry",
    "CustomBoundedRule", "DesignResult", "ModelError", "MultilayerModel", "ScenarioSpec",
    "SubStochasticError", "Trajectory", "WaveData", "alpha_from_waves", "bounds", "calibrate",
    "catalog_rule", "closed_form", "delta_percent", "lambda_from_covariance", "load_model",
    "normalize_adjacency", "objective", "optimize", "residual", "resolvent", "save_model",
    "simulate", "solve_affine_exact", "step", "subset_search", "validate",
]
