"""Neural forecasting and regression with learned first-order error autocorrelation."""
from __future__ import annotations

__version__ = "0.1.0"

from .kernels import BACKEND
from .series import SeriesFrame, SplitSpec, load_csv, save_csv, split_chronological
from .models import ModelSpec, build, predict
from .adjust import (
    FitReport,
    RhoParam,
    TrainConfig,
    default_rho_grid,
    grid_search_rho,
    joint_train,
    naive_mpw_train,
    recover_forecast,
    transform_target,
    transform_window,
)
from .stats import (
    DEFAULT_CRITICAL_VALUES,
    durbin_watson,
    empirical_critical_values,
    residual_autocorrelation,
    rrmse,
    simulate_ar1,
)
from .classical import cochrane_orcutt, ols_fit, prais_winsten

__all__ = [
    "BACKEND", "SeriesFrame", "SplitSpec", "load_csv", "save_csv", "split_chronological",
    "ModelSpec", "build", "predict", "FitReport", "RhoParam", "TrainConfig", "default_rho_grid",
    "grid_search_rho", "joint_train", "naive_mpw_train", "recover_forecast", "transform_target",
    "transform_window", "DEFAULT_CRITICAL_VALUES", "durbin_watson", "empirical_critical_values",
    "residual_autocorrelation", "rrmse", "simulate_ar1", "cochrane_orcutt", "ols_fit", "prais_winsten",
]
