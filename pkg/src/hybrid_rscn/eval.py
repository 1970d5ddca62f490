"""Repeated-trial experiments, grid surfaces and report files."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .construct import ConstructionError
from .metrics import UndefinedVarianceError, nrmse
from .presets import ModelSettings, TaskData
from .variants import FitResult, HybridModel, Selection, fit_variant, get_variant, select_for_task

__all__ = [
    "nrmse",
    "TrialRecord",
    "TrialSummary",
    "run_trials",
    "GridSurface",
    "grid_search",
    "export_report",
    "load_report",
    "TABLE_COLUMNS",
]

logger = logging.getLogger(__name__)

TABLE_COLUMNS = (
    "model",
    "reservoir_size",
    "training_time_mean",
    "training_time_std",
    "training_nrmse_mean",
    "training_nrmse_std",
    "testing_nrmse_mean",
    "testing_nrmse_std",
    "trials",
)


@dataclass
class TrialRecord:
    seed: int
    final_n: int = 0
    train_seconds: float = math.nan
    train_nrmse: float = math.nan
    test_nrmse: float = math.nan
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _mean_std(values) -> tuple:
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        return math.nan, math.nan
    return float(a.mean()), float(a.std())


@dataclass
class TrialSummary:
    """Per-model aggregate over successful trials.

    ``*_std`` are population standard deviations (zero for one trial).
    """

    model: str
    records: List[TrialRecord] = field(default_factory=list)

    @property
    def good(self) -> List[TrialRecord]:
        return [r for r in self.records if r.ok]

    @property
    def n_trials(self) -> int:
        return len(self.good)

    @property
    def incomplete(self) -> bool:
        return len(self.good) < len(self.records)

    @property
    def reservoir_size(self) -> float:
        return _mean_std([r.final_n for r in self.good])[0]

    @property
    def train_time(self) -> tuple:
        return _mean_std([r.train_seconds for r in self.good])

    @property
    def train_nrmse(self) -> tuple:
        return _mean_std([r.train_nrmse for r in self.good])

    @property
    def test_nrmse(self) -> tuple:
        return _mean_std([r.test_nrmse for r in self.good])

    def row(self) -> dict:
        return {
            "model": self.model,
            "reservoir_size": self.reservoir_size,
            "training_time_mean": self.train_time[0],
            "training_time_std": self.train_time[1],
            "training_nrmse_mean": self.train_nrmse[0],
            "training_nrmse_std": self.train_nrmse[1],
            "testing_nrmse_mean": self.test_nrmse[0],
            "testing_nrmse_std": self.test_nrmse[1],
            "trials": self.n_trials,
        }

    def to_dict(self) -> dict:
        d = self.row()
        d["incomplete"] = self.incomplete
        d["records"] = [asdict(r) for r in self.records]
        return d

    @classmethod
    def from_dict(cls, d) -> "TrialSummary":
        return cls(d["model"], [TrialRecord(**r) for r in d.get("records", [])])


def _one_trial(args) -> TrialRecord:
    task, variant, settings, seed, selection = args
    try:
        res = fit_variant(task, variant, settings, seed, selection)
        return TrialRecord(seed, res.final_n, res.train_seconds, res.train_nrmse, res.model.score(task.test))
    except (ConstructionError, FloatingPointError, UndefinedVarianceError, np.linalg.LinAlgError) as exc:
        return TrialRecord(seed, error=f"{type(exc).__name__}: {exc}")


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_trials(
    task: TaskData,
    variant: str,
    n_trials: int,
    base_seed: int = 0,
    settings: ModelSettings = ModelSettings(),
    workers: int = 1,
    selection: Optional[Selection] = None,
) -> TrialSummary:
    """Train ``variant`` ``n_trials`` times with seeds ``base_seed + i``.

    The data and the order selection are shared; only the random reservoir
    changes between trials.  Failed trials are kept in ``records`` with
    their error and left out of the statistics.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    v = get_variant(variant)
    if selection is None:
        selection = select_for_task(task, v.lasso, settings)
    jobs = [(task, v.name, settings, base_seed + i, selection) for i in range(n_trials)]
    records = _map(_one_trial, jobs, workers)
    summary = TrialSummary(v.name, records)
    if summary.incomplete:
        warnings.warn(
            f"{v.name}: {len(records) - summary.n_trials} of {len(records)} trials failed", stacklevel=2
        )
    return summary


@dataclass
class GridSurface:
    """Mean test NRMSE over a ``(c, n)`` grid; ``cells[i, j]`` pairs ``c_values[i]`` with ``n_values[j]``."""

    c_values: np.ndarray
    n_values: np.ndarray
    cells: np.ndarray
    std: np.ndarray
    trials: np.ndarray  # successful trials per cell
    diagnostics: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.c_values = np.asarray(self.c_values, dtype=np.float64)
        self.n_values = np.asarray(self.n_values, dtype=int)
        shape = (self.c_values.size, self.n_values.size)
        for name in ("cells", "std", "trials"):
            a = np.asarray(getattr(self, name))
            if a.shape != shape:
                raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
            setattr(self, name, a)

    def argmin(self) -> tuple:
        """``(i, j)`` of the smallest finite cell; ties go to the smaller ``n``, then smaller ``c``."""
        flat = np.where(np.isfinite(self.cells), self.cells, np.inf)
        if not np.isfinite(flat).any():
            raise ValueError("surface has no finite cells")
        best = flat.min()
        hits = np.argwhere(flat == best)
        i, j = min(hits.tolist(), key=lambda ij: (ij[1], ij[0]))
        return int(i), int(j)

    def best(self) -> tuple:
        i, j = self.argmin()
        return float(self.c_values[i]), int(self.n_values[j]), float(self.cells[i, j])

    def long_rows(self):
        for i, c in enumerate(self.c_values):
            for j, n in enumerate(self.n_values):
                yield {
                    "c": float(c),
                    "n": int(n),
                    "mean": float(self.cells[i, j]),
                    "std": float(self.std[i, j]),
                    "trials": int(self.trials[i, j]),
                }

    def to_dict(self) -> dict:
        return {
            "c_values": self.c_values.tolist(),
            "n_values": self.n_values.tolist(),
            "cells": self.cells.tolist(),
            "std": self.std.tolist(),
            "trials": self.trials.tolist(),
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d) -> "GridSurface":
        return cls(
            d["c_values"], d["n_values"],
            np.asarray(d["cells"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64),
            np.asarray(d["trials"], dtype=int), list(d.get("diagnostics", [])),
        )


def _grid_column(args):
    # One construction at the largest cap yields every smaller cap: a cap
    # only ends the loop, so the run capped at n is this run's state at n.
    task, variant, settings, c, n_values, seed, selection = args
    cfg = replace(settings.construct, c=c, n_max_nodes=max(n_values))
    caps = sorted(set(int(n) for n in n_values))
    snaps = {}

    def on_node(net, readout, report):
        if net.n_nodes in caps:
            snaps[net.n_nodes] = HybridModel(
                variant, selection.spec, selection.standardizer, selection.linear,
                selection.inputs, net, readout, task.washout,
            )

    out = {}
    try:
        res = fit_variant(task, variant, replace(settings, construct=cfg), seed, selection, on_node)
    except ConstructionError as exc:
        return {n: (math.nan, f"c={c:g} seed={seed}: {exc}") for n in caps}
    stopped_at = res.report.final_n + (cfg.n_step if res.report.stop_reason == "early-stop" else 0)
    small = [n for n in caps if n <= cfg.initial_nodes]
    for n in caps:
        if n in small:
            # nothing is grown: the cell is an n-node random initial reservoir
            tiny = replace(cfg, n_max_nodes=n, initial_nodes=n, n_step=min(cfg.n_step, n - 1))
            capped = replace(settings, construct=tiny)
            model = fit_variant(task, variant, capped, seed, selection).model
        elif stopped_at <= n:
            model = res.model
        else:
            model = snaps[n]
        try:
            out[n] = (model.score(task.test), None)
        except (FloatingPointError, UndefinedVarianceError) as exc:
            out[n] = (math.nan, f"c={c:g} n={n} seed={seed}: {exc}")
    return out


def grid_search(
    task: TaskData,
    c_values: Sequence[float],
    n_values: Sequence[int],
    trials_per_cell: int = 1,
    base_seed: int = 0,
    variant: str = "LASSO-RSCN-L2",
    settings: ModelSettings = ModelSettings(),
    workers: int = 1,
    selection: Optional[Selection] = None,
) -> GridSurface:
    """Mean test NRMSE for every ``(c, n)`` pair, construction capped at ``n``.

    Early stopping stays active, so a cap above the early-stop point gives
    the same model as the uncapped run.  Trial ``k`` of every cell uses seed
    ``base_seed + k``.
    """
    if len(c_values) == 0 or len(n_values) == 0:
        raise ValueError("grid axes must be non-empty")
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be >= 1")
    if min(int(n) for n in n_values) < 2:
        raise ValueError("reservoir sizes must be at least 2")
    v = get_variant(variant)
    if v.reservoir != "rscn":
        raise ValueError("grid search over reservoir size needs a grown variant")
    if selection is None:
        selection = select_for_task(task, v.lasso, settings)
    jobs = [
        (task, v.name, settings, float(c), tuple(int(n) for n in n_values), base_seed + k, selection)
        for c in c_values
        for k in range(trials_per_cell)
    ]
    results = _map(_grid_column, jobs, workers)
    nc, nn = len(c_values), len(n_values)
    scores = np.full((nc, nn, trials_per_cell), np.nan)
    diagnostics = []
    for idx, res in enumerate(results):
        i, k = divmod(idx, trials_per_cell)
        for j, n in enumerate(n_values):
            val, diag = res[int(n)]
            scores[i, j, k] = val
            if diag:
                diagnostics.append(diag)
    ok = np.isfinite(scores)
    counts = ok.sum(axis=2)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(scores, axis=2)
        std = np.nanstd(scores, axis=2)
    return GridSurface(np.asarray(c_values, float), np.asarray(n_values, int), mean, std, counts, diagnostics)


def export_report(obj, fmt: str, path) -> Path:
    """Write a :class:`TrialSummary`, a list of them, or a :class:`GridSurface`.

    CSV tables use the column order model, reservoir size, training time,
    training NRMSE, testing NRMSE; surfaces are written in long format
    ``(c, n, mean, std, trials)``.
    """
    path = Path(path)
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    if isinstance(obj, GridSurface):
        if obj.cells.size == 0:
            raise ValueError("empty surface")
        if fmt == "json":
            path.write_text(json.dumps({"kind": "surface", **obj.to_dict()}, indent=2))
        else:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                wr = csv.DictWriter(fh, ["c", "n", "mean", "std", "trials"])
                wr.writeheader()
                for row in obj.long_rows():
                    wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return path
    summaries = [obj] if isinstance(obj, TrialSummary) else list(obj)
    if not summaries:
        raise ValueError("nothing to export")
    if fmt == "json":
        path.write_text(json.dumps({"kind": "table", "models": [s.to_dict() for s in summaries]}, indent=2))
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.DictWriter(fh, TABLE_COLUMNS)
            wr.writeheader()
            for s in summaries:
                wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in s.row().items()})
    return path


def load_report(path):
    """Read back what :func:`export_report` wrote.

    JSON restores full objects.  CSV tables come back as lists of row dicts
    with numeric fields parsed; surface CSVs are rebuilt into a
    :class:`GridSurface` (diagnostics are not stored in CSV).
    """
    path = Path(path)
    if path.suffix == ".json":
        d = json.loads(path.read_text())
        if d.get("kind") == "surface":
            return GridSurface.from_dict(d)
        return [TrialSummary.from_dict(m) for m in d["models"]]
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(rows[0]) == {"c", "n", "mean", "std", "trials"}:
        cs = sorted({float(r["c"]) for r in rows})
        ns = sorted({int(r["n"]) for r in rows})
        shape = (len(cs), len(ns))
        mean, std, trials = np.full(shape, np.nan), np.full(shape, np.nan), np.zeros(shape, int)
        for r in rows:
            i, j = cs.index(float(r["c"])), ns.index(int(r["n"]))
            mean[i, j], std[i, j], trials[i, j] = float(r["mean"]), float(r["std"]), int(r["trials"])
        return GridSurface(cs, ns, mean, std, trials)
    out = []
    for r in rows:
        out.append({k: (v if k == "model" else (int(v) if k == "trials" else float(v))) for k, v in r.items()})
    return out
