"""Benchmark tasks: data protocols and default hyperparameters.

Three protocols are bundled.  ``sysid`` synthesizes the third-order plant,
``debutanizer`` and ``load`` read a user-supplied CSV with the column layout
below, and ``narx7`` is a seeded 7-input stand-in that follows the
debutanizer protocol so the industrial pipeline can be exercised without
the proprietary data.

============  ====================================================  ==============
task          CSV columns (in order)                                train / test
============  ====================================================  ==============
debutanizer   u1 .. u7 (inputs), y (target)                         1500 / 894
load          temperature, humidity, precipitation, wind_speed,     1000 / 415
              load (target)
============  ====================================================  ==============
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .construct import ScTrainConfig
from .dataset import LagSpec, RawSeries, add_gaussian_noise, generate_sysid_series, load_csv

__all__ = [
    "TaskData",
    "ModelSettings",
    "TaskPreset",
    "PRESETS",
    "sysid_task",
    "csv_task",
    "narx7_series",
    "narx7_task",
    "make_task",
    "task_from_series",
    "VAL_SEED_OFFSET",
]

# validation draws must not coincide with another run's training draw
VAL_SEED_OFFSET = 1_000_003


@dataclass(frozen=True)
class TaskData:
    """Train/validation/test series plus the two lag designs of a task.

    ``screening`` is the wide design the sparse model selects from;
    ``basic`` is the fixed regressor used by the non-selecting variants.
    """

    name: str
    train: RawSeries
    val: RawSeries
    test: RawSeries
    washout: int
    screening: LagSpec
    basic: LagSpec


@dataclass(frozen=True)
class ModelSettings:
    """Everything besides the data that a variant needs to train."""

    construct: ScTrainConfig = field(default_factory=ScTrainConfig)
    esn_nodes: int = 150
    esn_lambda: float = 0.5
    c_l_readout: float = 0.01
    lasso_folds: int = 5
    select_threshold: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "construct": self.construct.to_dict(),
            "esn_nodes": self.esn_nodes,
            "esn_lambda": self.esn_lambda,
            "c_l_readout": self.c_l_readout,
            "lasso_folds": self.lasso_folds,
            "select_threshold": self.select_threshold,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSettings":
        known = {"construct", "esn_nodes", "esn_lambda", "c_l_readout", "lasso_folds", "select_threshold"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        kw = dict(d)
        if "construct" in kw:
            kw["construct"] = ScTrainConfig.from_dict(kw["construct"])
        return cls(**kw)


@dataclass(frozen=True)
class TaskPreset:
    name: str
    inputs: Tuple[str, ...]
    target: str
    n_train: int
    n_val: int
    n_test: int
    washout: int
    input_lags: int  # screening lags 0..input_lags on each input
    output_lags: int  # screening lags 1..output_lags on the target
    basic_inputs: Tuple[str, ...]
    settings: ModelSettings
    noise_sigma: float = 0.01


def _settings(n_max, sparsity, alpha, esn_nodes):
    return ModelSettings(
        construct=ScTrainConfig(n_max_nodes=n_max, sparsity=sparsity, alpha=alpha),
        esn_nodes=esn_nodes,
    )


_DEB_IN = tuple(f"u{k}" for k in range(1, 8))

PRESETS: Dict[str, TaskPreset] = {
    "sysid": TaskPreset(
        "sysid", ("u",), "y", 2000, 1000, 800, 10, 9, 10, ("u",),
        _settings(300, 0.03, 0.9, 150),
    ),
    "debutanizer": TaskPreset(
        "debutanizer", _DEB_IN, "y", 1500, 894, 894, 100, 2, 4, _DEB_IN[:5],
        _settings(200, 0.05, 0.8, 100),
    ),
    "load": TaskPreset(
        "load", ("temperature", "humidity", "precipitation", "wind_speed"), "load",
        1000, 415, 415, 30, 2, 2, ("temperature", "humidity", "precipitation", "wind_speed"),
        _settings(300, 0.03, 0.8, 100),
    ),
    "narx7": TaskPreset(
        "narx7", _DEB_IN, "y", 1500, 894, 894, 100, 2, 4, _DEB_IN[:5],
        _settings(200, 0.05, 0.8, 100),
    ),
}


def _lag_specs(p: TaskPreset, input_lags: Optional[int] = None, output_lags: Optional[int] = None):
    il = p.input_lags if input_lags is None else input_lags
    ol = p.output_lags if output_lags is None else output_lags
    screening = LagSpec(
        {name: tuple(range(il + 1)) for name in p.inputs},
        {p.target: tuple(range(1, ol + 1))},
    )
    basic = LagSpec({name: (0,) for name in p.basic_inputs}, {p.target: (1,)})
    return screening, basic


def sysid_task(
    seed: int = 0,
    n_train: int = 2000,
    n_val: int = 1000,
    n_test: int = 800,
    washout: int = 10,
    form: str = "narendra",
) -> TaskData:
    """Synthetic plant protocol.

    Training and validation inputs are independent uniform draws (the
    validation seed is offset from ``seed``); the test input is the fixed
    two-regime sinusoid.  The screening design holds 10 lags of ``u``
    starting at 0 and 10 of ``y`` starting at 1.
    """
    p = PRESETS["sysid"]
    train = generate_sysid_series(n_train, "train", seed, form)
    val = generate_sysid_series(n_val, "train", seed + VAL_SEED_OFFSET, form)
    test = generate_sysid_series(n_test, "test", seed, form)
    screening, basic = _lag_specs(p)
    return TaskData("sysid", train, val, test, washout, screening, basic)


def _split_with_noisy_val(name, raw: RawSeries, n_train, n_test, washout, noise_sigma, seed, p):
    if n_train + n_test > raw.n_samples:
        raise ValueError(f"{name}: need {n_train + n_test} samples, file has {raw.n_samples}")
    train = raw.slice(0, n_train)
    test = raw.slice(n_train, n_train + n_test)
    val = add_gaussian_noise(test, noise_sigma, seed)
    screening, basic = _lag_specs(p)
    return TaskData(name, train, val, test, washout, screening, basic)


def csv_task(
    name: str,
    path,
    seed: int = 0,
    n_train: Optional[int] = None,
    n_test: Optional[int] = None,
    noise_sigma: Optional[float] = None,
) -> TaskData:
    """Industrial protocol from one CSV: leading rows train, the rest test.

    The validation set is the test set with Gaussian noise on the target.
    """
    p = PRESETS[name]
    schema = {c: "input" for c in p.inputs}
    schema[p.target] = "target"
    raw = load_csv(path, schema)
    n_tr = p.n_train if n_train is None else n_train
    n_te = p.n_test if n_test is None else n_test
    sigma = p.noise_sigma if noise_sigma is None else noise_sigma
    return _split_with_noisy_val(name, raw, n_tr, n_te, p.washout, sigma, seed, p)


def narx7_series(n: int, seed: int = 0) -> RawSeries:
    """Seeded 7-input NARX process with debutanizer-like variable layout.

    Inputs are smooth AR(1) signals; the output depends nonlinearly on a few
    current and delayed inputs plus its own past, and ``u6``, ``u7`` are
    irrelevant distractors.
    """
    if n < 10:
        raise ValueError("need n >= 10 samples")
    rng = np.random.default_rng(np.uint64(seed))
    burn = 200
    m = n + burn
    e = rng.standard_normal((7, m))
    u = np.zeros((7, m))
    for t in range(1, m):
        u[:, t] = 0.9 * u[:, t - 1] + 0.3 * e[:, t]
    y = np.zeros(m)
    noise = 0.01 * rng.standard_normal(m)
    for t in range(2, m):
        y[t] = (
            0.6 * y[t - 1]
            - 0.15 * y[t - 2]
            + 0.5 * np.tanh(u[0, t - 2] + 0.5 * u[1, t])
            + 0.3 * u[2, t] * u[4, t]
            + 0.2 * np.sin(u[3, t - 2])
            + 0.1 * u[4, t] ** 2
            + noise[t]
        )
    return RawSeries(u[:, burn:], y[None, burn:], _DEB_IN, ("y",))


def narx7_task(seed: int = 0, noise_sigma: float = 0.01) -> TaskData:
    p = PRESETS["narx7"]
    raw = narx7_series(p.n_train + p.n_test, seed)
    return _split_with_noisy_val("narx7", raw, p.n_train, p.n_test, p.washout, noise_sigma, seed + VAL_SEED_OFFSET, p)


def task_from_series(
    name: str,
    train: RawSeries,
    val: RawSeries,
    test: RawSeries,
    washout: Optional[int] = None,
    input_lags: Optional[int] = None,
    output_lags: Optional[int] = None,
) -> TaskData:
    """Wrap already-split series in a preset's lag designs."""
    p = PRESETS[name]
    screening, basic = _lag_specs(p, input_lags, output_lags)
    w = p.washout if washout is None else washout
    return TaskData(name, train, val, test, w, screening, basic)


def make_task(name: str, seed: int = 0, path=None, **kw) -> TaskData:
    """Build a task by preset name; CSV-backed tasks need ``path``."""
    if name == "sysid":
        return sysid_task(seed, **kw)
    if name == "narx7":
        return narx7_task(seed, **kw)
    if name in ("debutanizer", "load"):
        if path is None:
            raise ValueError(f"task {name!r} reads its data from a CSV path")
        return csv_task(name, path, seed, **kw)
    raise ValueError(f"unknown task {name!r}; choose from {sorted(PRESETS)}")
