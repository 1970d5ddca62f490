"""Sparse linear models with constructively grown reservoir compensation."""

__version__ = "0.1.0"

from .construct import BuildReport, ConstructionError, ScTrainConfig, TrainingData, grow
from .dataset import LagSpec, LaggedDataset, RawSeries, build_lagged, generate_sysid_series, load_csv
from .eval import GridSurface, TrialSummary, export_report, grid_search, load_report, run_trials
from .lasso import LassoModel, NoOrdersSelected, fit_lasso, fit_path, select_c_l, select_orders
from .metrics import nrmse
from .online import OnlineState, Trajectory, run_stream, step
from .presets import PRESETS, ModelSettings, TaskData, make_task
from .reservoir import Readout, ReservoirNet, compute_states
from .serialization import load_model, save_model
from .variants import VARIANTS, HybridModel, fit_variant, evaluate, select_for_task

__all__ = [
    "BuildReport", "ConstructionError", "ScTrainConfig", "TrainingData", "grow",
    "LagSpec", "LaggedDataset", "RawSeries", "build_lagged", "generate_sysid_series", "load_csv",
    "GridSurface", "TrialSummary", "export_report", "grid_search", "load_report", "run_trials",
    "LassoModel", "NoOrdersSelected", "fit_lasso", "fit_path", "select_c_l", "select_orders",
    "nrmse", "OnlineState", "Trajectory", "run_stream", "step",
    "PRESETS", "ModelSettings", "TaskData", "make_task",
    "Readout", "ReservoirNet", "compute_states", "load_model", "save_model",
    "VARIANTS", "HybridModel", "fit_variant", "evaluate", "select_for_task",
]
