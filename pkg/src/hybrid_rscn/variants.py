"""Model variants and the end-to-end fit/predict pipeline.

Variant names follow the usual convention: a ``LASSO-`` prefix adds order
selection with residual compensation, ``-L2`` means a ridge readout (and,
for grown reservoirs, the regularized constraint), ``-L1,2`` an elastic-net
readout, and no suffix a plain least-squares readout.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np

from . import lasso as _lasso
from .construct import BuildReport, ScTrainConfig, TrainingData, grow, solve_readout
from .dataset import (
    LaggedDataset,
    LagSpec,
    RawSeries,
    Standardizer,
    build_lagged,
    standardize_apply,
    standardize_fit,
)
from .lasso import LassoModel, OrderSelection
from .metrics import nrmse
from .presets import ModelSettings, TaskData
from .reservoir import Readout, ReservoirNet, build_esn, compute_states, extended

__all__ = [
    "Variant",
    "VARIANTS",
    "get_variant",
    "Selection",
    "select_for_task",
    "HybridModel",
    "FitResult",
    "fit_variant",
    "evaluate",
]


class Variant(NamedTuple):
    name: str
    reservoir: str  # "esn" | "rscn"
    lasso: bool
    readout: str  # "ls" | "ridge" | "elastic"


VARIANTS = {
    v.name: v
    for v in (
        Variant("ESN", "esn", False, "ls"),
        Variant("ESN-L1,2", "esn", False, "elastic"),
        Variant("LASSO-ESN", "esn", True, "ls"),
        Variant("LASSO-ESN-L2", "esn", True, "ridge"),
        Variant("RSCN", "rscn", False, "ls"),
        Variant("RSCN-L1,2", "rscn", False, "elastic"),
        Variant("LASSO-RSCN", "rscn", True, "ls"),
        Variant("LASSO-RSCN-L2", "rscn", True, "ridge"),
    )
}


def get_variant(name: str) -> Variant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {list(VARIANTS)}") from None


class Selection(NamedTuple):
    """Input-side preprocessing shared by every trial on one task."""

    spec: LagSpec
    standardizer: Standardizer
    linear: LassoModel  # zero weights when no order selection is used
    inputs: Tuple[Tuple[str, int], ...]  # features fed to the reservoir
    orders: Optional[OrderSelection] = None
    path: Optional[_lasso.LassoPath] = None


def select_for_task(task: TaskData, use_lasso: bool, settings: ModelSettings = ModelSettings()) -> Selection:
    """Fit the standardizer and, for selecting variants, the sparse model.

    Depends only on the training data, so trials may share it.
    """
    w = task.washout
    spec = task.screening if use_lasso else task.basic
    d = build_lagged(task.train, spec, 0).rows(w)
    s = standardize_fit(d)
    if not use_lasso:
        zero = LassoModel(
            np.zeros((d.targets.shape[0], d.n_features)), s.target_mean.copy(), 0.0, d.feature_map, s
        )
        return Selection(spec, s, zero, d.feature_map)
    z = standardize_apply(s, d)
    path = _lasso.fit_path(z, folds=settings.lasso_folds, standardizer=s)
    c_l = _lasso.select_c_l(path)
    model = _lasso.fit_lasso(z, c_l, standardizer=s)
    orders = _lasso.select_orders(model, settings.select_threshold)
    return Selection(spec, s, model, orders.selected, orders, path)


@dataclass(frozen=True)
class HybridModel:
    """Sparse linear part plus reservoir compensation, ready to predict."""

    variant: str
    spec: LagSpec
    standardizer: Standardizer
    linear: LassoModel
    inputs: Tuple[Tuple[str, int], ...]
    net: ReservoirNet
    readout: Readout
    washout: int

    def lagged(self, raw: RawSeries) -> LaggedDataset:
        return build_lagged(raw, self.spec, 0)

    def reservoir_input(self, d: LaggedDataset) -> np.ndarray:
        """``(K_R, n)`` standardized selected features."""
        cols = d.columns(self.inputs)
        return self.standardizer.transform_design(d.design)[:, cols].T

    def predict_lagged(self, d: LaggedDataset, x0=None):
        """Return ``(y_total, y_linear)`` for every row of ``d``."""
        u = self.reservoir_input(d)
        y_lin = self.linear.predict_design(d.design)
        y_res = self.readout(extended(compute_states(self.net, u, x0), u))
        return y_lin + y_res, y_lin

    def predict(self, raw: RawSeries, x0=None) -> Tuple[np.ndarray, np.ndarray]:
        """Teacher-forced one-step predictions and matching targets.

        Both arrays cover every lag-aligned row; the first ``washout``
        columns are the transient that scoring skips.
        """
        d = self.lagged(raw)
        y, _ = self.predict_lagged(d, x0)
        return y, d.targets

    def free_run(self, raw: RawSeries, x0=None) -> Tuple[np.ndarray, np.ndarray]:
        """Predictions that feed the model's own outputs back as target lags.

        Measured outputs are used only for the first ``max_lag`` samples.
        """
        if raw.targets.shape[0] != 1:
            raise ValueError("free-running mode supports a single target")
        spec = self.spec
        m = spec.max_lag
        tname = raw.target_names[0]
        layout = [
            (name, lag)
            for names, lag_map in ((raw.input_names, spec.input_lags), (raw.target_names, spec.output_lags))
            for name in names
            for lag in lag_map.get(name, ())
        ]
        cols = np.array([layout.index(f) for f in self.inputs])
        y_hat = raw.targets[0].copy()
        x = np.zeros(self.net.n_nodes) if x0 is None else np.asarray(x0, dtype=np.float64)
        out = np.zeros(raw.n_samples - m)
        for t in range(m, raw.n_samples):
            design = np.array(
                [[(y_hat if name == tname else raw.variable(name))[t - lag] for name, lag in layout]]
            )
            u = self.standardizer.transform_design(design)[0, cols]
            x = np.tanh(self.net.w_in @ u + self.net.w_r @ x + self.net.b)
            y_hat[t] = self.linear.predict_design(design)[0, 0] + self.readout(np.concatenate([x, u]))[0]
            out[t - m] = y_hat[t]
        return out[None, :], raw.targets[:, m:]

    def score(self, raw: RawSeries) -> float:
        y, t = self.predict(raw)
        w = self.washout
        return nrmse(y[:, w:], t[:, w:])


@dataclass
class FitResult:
    model: HybridModel
    report: Optional[BuildReport]
    train_seconds: float
    train_nrmse: float

    @property
    def final_n(self) -> int:
        return self.model.net.n_nodes


def _construct_config(variant: Variant, settings: ModelSettings, seed: int) -> ScTrainConfig:
    cfg = settings.construct
    return replace(cfg, seed=seed, readout=variant.readout, c_l_readout=settings.c_l_readout)


def _training_data(sel: Selection, raw: RawSeries, washout: int) -> TrainingData:
    d = build_lagged(raw, sel.spec, 0)
    cols = d.columns(sel.inputs)
    u = sel.standardizer.transform_design(d.design)[:, cols].T
    y_lin = sel.linear.predict_design(d.design)
    return TrainingData(u, d.targets - y_lin, washout, y_lin)


def fit_variant(
    task: TaskData,
    variant: str,
    settings: ModelSettings = ModelSettings(),
    seed: int = 0,
    selection: Optional[Selection] = None,
    on_node=None,
) -> FitResult:
    """Train one variant on ``task``.

    ``train_seconds`` covers reservoir construction and readout solving
    only; order selection is excluded (pass a precomputed ``selection`` to
    share it across trials).
    """
    v = get_variant(variant)
    if selection is None:
        selection = select_for_task(task, v.lasso, settings)
    w = task.washout
    train = _training_data(selection, task.train, w)
    cfg = _construct_config(v, settings, seed)
    report = None
    t0 = time.perf_counter()
    if v.reservoir == "rscn":
        val = _training_data(selection, task.val, w)
        net, readout, report = grow(train, val, cfg, on_node=on_node)
    else:
        net = build_esn(train.u_r.shape[0], settings.esn_nodes, settings.esn_lambda, cfg.sparsity, cfg.alpha, seed)
        x = extended(compute_states(net, train.u_r)[:, w:], train.u_r[:, w:])
        readout = solve_readout(cfg, x, train.y_hat[:, w:])
    elapsed = time.perf_counter() - t0
    model = HybridModel(
        v.name, selection.spec, selection.standardizer, selection.linear, selection.inputs, net, readout, w
    )
    return FitResult(model, report, elapsed, model.score(task.train))


def evaluate(model: HybridModel, raw: RawSeries) -> dict:
    y, t = model.predict(raw)
    w = model.washout
    return {"nrmse": nrmse(y[:, w:], t[:, w:]), "n_scored": int(t.shape[1] - w)}
