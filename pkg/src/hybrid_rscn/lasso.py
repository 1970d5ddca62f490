"""Sparse linear order selection over lagged features.

The objective is ``||W U - T||^2 + c_l * ||W||_1`` with no ``1/n`` factor,
solved row by row.  Everything here works in standardized space; the
attached :class:`~hybrid_rscn.dataset.Standardizer` maps predictions back to
target units.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._cd import coordinate_descent
from .dataset import LaggedDataset, Standardizer

__all__ = [
    "NoOrdersSelected",
    "LassoModel",
    "LassoPath",
    "OrderSelection",
    "fit_lasso",
    "default_grid",
    "fit_path",
    "compute_p",
    "select_c_l",
    "select_orders",
    "predict",
    "residuals",
]

logger = logging.getLogger(__name__)


class NoOrdersSelected(ValueError):
    """Every coefficient fell below the selection threshold; try a smaller c_l."""


@dataclass(frozen=True)
class LassoModel:
    weights: np.ndarray  # (L, F), standardized space
    intercept: np.ndarray  # (L,), target units
    c_l: float
    feature_map: Tuple[Tuple[str, int], ...]
    standardizer: Optional[Standardizer] = None
    converged: bool = True
    n_iter: int = 0

    def predict_design(self, design: np.ndarray) -> np.ndarray:
        """``(L, n)`` predictions for a raw ``(n, F)`` design matrix."""
        u = self.standardizer.transform_design(design) if self.standardizer else np.asarray(design)
        return self.weights @ u.T + self.intercept[:, None]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "intercept": self.intercept.tolist(),
            "c_l": self.c_l,
            "feature_map": [list(f) for f in self.feature_map],
            "standardizer": self.standardizer.to_dict() if self.standardizer else None,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d) -> "LassoModel":
        s = d.get("standardizer")
        return cls(
            np.asarray(d["weights"], dtype=np.float64),
            np.asarray(d["intercept"], dtype=np.float64),
            float(d["c_l"]),
            tuple((str(n), int(l)) for n, l in d["feature_map"]),
            Standardizer.from_dict(s) if s else None,
            bool(d.get("converged", True)),
            int(d.get("n_iter", 0)),
        )


@dataclass(frozen=True)
class LassoPath:
    grid: np.ndarray  # descending
    coefs: np.ndarray  # (len(grid), L, F)
    cv_mse: np.ndarray
    cv_se: np.ndarray
    p_values: np.ndarray
    feature_map: Tuple[Tuple[str, int], ...] = ()

    def __len__(self):
        return len(self.grid)

    def to_json(self) -> str:
        return json.dumps(
            {
                "features": [{"name": n, "lag": l} for n, l in self.feature_map],
                "grid": self.grid.tolist(),
                "coefs": self.coefs.tolist(),
                "cv_mse": self.cv_mse.tolist(),
                "cv_se": self.cv_se.tolist(),
                "p": self.p_values.tolist(),
            },
            indent=2,
        )


@dataclass(frozen=True)
class OrderSelection:
    selected: Tuple[Tuple[str, int], ...]
    coefficients: np.ndarray  # (L, len(selected)), target units per unit feature
    standardized: np.ndarray  # (L, len(selected))
    c_l_used: float

    def to_dict(self) -> dict:
        return {
            "c_l": self.c_l_used,
            "selected": [
                {
                    "name": n,
                    "lag": l,
                    "coefficient": self.coefficients[:, j].tolist(),
                    "standardized": self.standardized[:, j].tolist(),
                }
                for j, (n, l) in enumerate(self.selected)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_finite(d: LaggedDataset):
    if not (np.all(np.isfinite(d.design)) and np.all(np.isfinite(d.targets))):
        raise FloatingPointError("dataset contains non-finite values")


def _active_mask(d: LaggedDataset, standardizer: Optional[Standardizer]):
    if standardizer is not None and standardizer.constant.shape[0] == d.n_features:
        return ~standardizer.constant
    return np.ones(d.n_features, dtype=bool)


def _fit_rows(u, t, c_l, active, tol, max_iter, w0=None):
    gram = u.T @ u
    w = np.zeros((t.shape[0], u.shape[1]))
    iters, ok = 0, True
    for q in range(t.shape[0]):
        wq, it, conv = coordinate_descent(
            gram, u.T @ t[q], c_l, 0.0, None if w0 is None else w0[q], active, tol, max_iter
        )
        w[q] = wq
        iters = max(iters, it)
        ok &= conv
    return w, iters, ok


def fit_lasso(
    d: LaggedDataset,
    c_l: float,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    standardizer: Optional[Standardizer] = None,
    w0: Optional[np.ndarray] = None,
) -> LassoModel:
    """Cyclic coordinate descent on standardized data ``d``.

    Pass the ``standardizer`` that produced ``d`` so the model can predict in
    target units; its constant-feature flags pin those weights at zero.
    """
    if c_l < 0:
        raise ValueError(f"c_l must be >= 0, got {c_l}")
    if d.n_eff < 1:
        raise ValueError("empty dataset")
    _check_finite(d)
    w, iters, ok = _fit_rows(d.design, d.targets, c_l, _active_mask(d, standardizer), tol, max_iter, w0)
    if not ok:
        logger.warning("lasso c_l=%g stopped at max_iter=%d before converging", c_l, max_iter)
    intercept = standardizer.target_mean.copy() if standardizer else np.zeros(d.targets.shape[0])
    return LassoModel(w, intercept, float(c_l), d.feature_map, standardizer, ok, iters)


def default_grid(d: LaggedDataset, n_points: int = 50, decades: float = 4.0) -> np.ndarray:
    """Log grid from the smallest all-zero ``c_l`` down ``decades`` decades."""
    c_max = float(np.max(np.abs(2.0 * d.design.T @ d.targets.T)))
    if c_max <= 0:
        raise ValueError("targets are orthogonal to every feature")
    return np.logspace(np.log10(c_max), np.log10(c_max) - decades, n_points)


def _forward_folds(n: int, folds: int):
    edges = np.linspace(0, n, folds + 2).astype(int)
    return [(edges[k], edges[k + 1], edges[k + 2]) for k in range(folds)]


def fit_path(
    d: LaggedDataset,
    grid: Optional[Sequence[float]] = None,
    folds: int = 5,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    standardizer: Optional[Standardizer] = None,
) -> LassoPath:
    """Warm-started path over a descending grid with forward-chaining CV.

    The series is cut into ``folds + 1`` contiguous blocks; fold ``k``
    trains on blocks ``0..k`` and validates on block ``k + 1``.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    _check_finite(d)
    if grid is None:
        grid = default_grid(d)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty c_l grid")
    if np.any(grid <= 0):
        raise ValueError("grid values must be positive")
    uniq = np.unique(grid)[::-1]
    if uniq.size != grid.size:
        warnings.warn("duplicate c_l grid values dropped", stacklevel=2)
    grid = uniq

    active = _active_mask(d, standardizer)
    splits = _forward_folds(d.n_eff, folds)
    if min(b - a for a, b, _ in splits) < 2 or min(c - b for _, b, c in splits) < 1:
        raise ValueError(f"{d.n_eff} rows are too few for {folds} forward-chaining folds")

    L, F = d.targets.shape[0], d.n_features
    coefs = np.zeros((grid.size, L, F))
    w = None
    for i, c_l in enumerate(grid):
        w, _, _ = _fit_rows(d.design, d.targets, c_l, active, tol, max_iter, w)
        coefs[i] = w

    fold_mse = np.zeros((folds, grid.size))
    for k, (_, b, c) in enumerate(splits):
        u_tr, t_tr = d.design[:b], d.targets[:, :b]
        u_va, t_va = d.design[b:c], d.targets[:, b:c]
        w = None
        for i, c_l in enumerate(grid):
            w, _, _ = _fit_rows(u_tr, t_tr, c_l, active, tol, max_iter, w)
            fold_mse[k, i] = np.mean((w @ u_va.T - t_va) ** 2)
    cv_mse = fold_mse.mean(axis=0)
    cv_se = fold_mse.std(axis=0, ddof=1) / np.sqrt(folds)
    p_values = np.abs(coefs).sum(axis=(1, 2))
    return LassoPath(grid, coefs, cv_mse, cv_se, p_values, d.feature_map)


def compute_p(model: LassoModel) -> float:
    """Sum of absolute lagged-feature coefficients in standardized space."""
    return float(np.abs(model.weights).sum())


def select_c_l(path: LassoPath) -> float:
    """Largest-P grid point inside the one-standard-error band of the CV minimum.

    Ties in P go to the larger ``c_l``.
    """
    if len(path) == 0:
        raise ValueError("empty path")
    best = int(np.argmin(path.cv_mse))
    band = path.cv_mse <= path.cv_mse[best] + path.cv_se[best]
    candidates = np.flatnonzero(band)
    p = path.p_values[candidates]
    top = candidates[p >= p.max() - 1e-12 * max(1.0, abs(p.max()))]
    return float(path.grid[top].max())


def select_orders(model: LassoModel, threshold: float = 1e-8) -> OrderSelection:
    """Features with any ``|coefficient| > threshold``, largest first."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    mag = np.abs(model.weights).max(axis=0)
    keep = np.flatnonzero(mag > threshold)
    if keep.size == 0:
        raise NoOrdersSelected(f"no coefficient above {threshold:g} at c_l={model.c_l:g}")
    keep = keep[np.argsort(-mag[keep], kind="stable")]
    std_coef = model.weights[:, keep]
    if model.standardizer is not None:
        raw_coef = std_coef / model.standardizer.feature_scale[keep]
    else:
        raw_coef = std_coef.copy()
    return OrderSelection(
        tuple(model.feature_map[j] for j in keep), raw_coef, std_coef, model.c_l
    )


def predict(model: LassoModel, d: LaggedDataset) -> np.ndarray:
    """Y_LASSO in target units for a dataset on the model's original scale."""
    if tuple(d.feature_map) != tuple(model.feature_map):
        raise ValueError("dataset features do not match the model")
    return model.predict_design(d.design)


def residuals(targets: np.ndarray, y_lasso: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.float64)
    y_lasso = np.asarray(y_lasso, dtype=np.float64)
    if targets.shape != y_lasso.shape:
        raise ValueError(f"shape mismatch {targets.shape} vs {y_lasso.shape}")
    return targets - y_lasso
