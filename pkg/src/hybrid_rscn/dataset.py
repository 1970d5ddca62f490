"""Time-series ingestion, benchmark synthesis and lagged design matrices.

Arrays follow a variables-by-samples layout: ``inputs`` is ``(K, n)`` and
``targets`` is ``(L, n)``.  Lagged design matrices are samples-by-features,
``(n_eff, F)``, which is the layout the regression solvers expect.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "SchemaError",
    "ParseError",
    "LagSpecError",
    "RawSeries",
    "LagSpec",
    "LaggedDataset",
    "Standardizer",
    "load_csv",
    "save_csv",
    "save_lagged_csv",
    "load_lagged_csv",
    "simulate_sysid",
    "generate_sysid_series",
    "build_lagged",
    "add_gaussian_noise",
    "standardize_fit",
    "standardize_apply",
]

Feature = Tuple[str, int]


class SchemaError(ValueError):
    """Column roles do not match the file or the series."""


class ParseError(ValueError):
    """A CSV cell or row could not be read."""


class LagSpecError(ValueError):
    """A lag specification is empty, refers to unknown variables or leaks the target."""


@dataclass(frozen=True)
class RawSeries:
    """Aligned multivariate input/target series.

    Attributes:
        inputs: ``(K, n)`` input samples.
        targets: ``(L, n)`` target samples.
        input_names: identifiers of the K input variables.
        target_names: identifiers of the L target variables.
        sample_period: informational sampling period, if known.
    """

    inputs: np.ndarray
    targets: np.ndarray
    input_names: Tuple[str, ...]
    target_names: Tuple[str, ...]
    sample_period: Optional[float] = None

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if inputs.shape[1] != targets.shape[1]:
            raise ValueError(
                f"inputs have {inputs.shape[1]} samples but targets have {targets.shape[1]}"
            )
        if inputs.shape[1] < 1:
            raise ValueError("no samples")
        if inputs.shape[0] < 1 or targets.shape[0] < 1:
            raise ValueError("need at least one input and one target variable")
        if len(self.input_names) != inputs.shape[0] or len(self.target_names) != targets.shape[0]:
            raise ValueError("variable names do not match array shapes")
        names = tuple(self.input_names) + tuple(self.target_names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise ValueError("series contains non-finite values")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "target_names", tuple(self.target_names))

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[1]

    @property
    def names(self) -> Tuple[str, ...]:
        return self.input_names + self.target_names

    def variable(self, name: str) -> np.ndarray:
        if name in self.input_names:
            return self.inputs[self.input_names.index(name)]
        if name in self.target_names:
            return self.targets[self.target_names.index(name)]
        raise KeyError(name)

    def slice(self, start: int, stop: Optional[int] = None) -> "RawSeries":
        """Return samples ``start:stop`` as a new series."""
        return replace(self, inputs=self.inputs[:, start:stop], targets=self.targets[:, start:stop])


@dataclass(frozen=True)
class LagSpec:
    """Which lags of which variables enter the regressor.

    ``input_lags`` maps input names to lags >= 0, ``output_lags`` maps target
    names to autoregressive lags >= 1.
    """

    input_lags: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)
    output_lags: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        ins = {k: tuple(sorted(set(int(l) for l in v))) for k, v in dict(self.input_lags).items()}
        outs = {k: tuple(sorted(set(int(l) for l in v))) for k, v in dict(self.output_lags).items()}
        for name, lags in ins.items():
            if any(l < 0 for l in lags):
                raise LagSpecError(f"negative lag for input {name!r}")
        for name, lags in outs.items():
            if any(l < 1 for l in lags):
                raise LagSpecError(f"output {name!r} needs lags >= 1 (lag 0 leaks the target)")
        object.__setattr__(self, "input_lags", ins)
        object.__setattr__(self, "output_lags", outs)

    @classmethod
    def screening(cls, raw: RawSeries, n_input_lags: int, n_output_lags: int) -> "LagSpec":
        """Lags ``0..n_input_lags-1`` for every input and ``1..n_output_lags`` for every target."""
        return cls(
            {k: tuple(range(n_input_lags)) for k in raw.input_names},
            {k: tuple(range(1, n_output_lags + 1)) for k in raw.target_names},
        )

    @property
    def max_lag(self) -> int:
        lags = [l for v in self.input_lags.values() for l in v]
        lags += [l for v in self.output_lags.values() for l in v]
        return max(lags, default=0)

    def is_empty(self) -> bool:
        return not any(self.input_lags.values()) and not any(self.output_lags.values())

    def to_dict(self) -> dict:
        return {
            "input_lags": {k: list(v) for k, v in self.input_lags.items()},
            "output_lags": {k: list(v) for k, v in self.output_lags.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LagSpec":
        return cls(d.get("input_lags", {}), d.get("output_lags", {}))


@dataclass(frozen=True)
class LaggedDataset:
    """Design matrix of lagged features aligned with targets.

    Row ``i`` corresponds to absolute sample index ``offset + i`` of the
    source series, and column ``j`` holds variable ``feature_map[j][0]`` at
    time ``offset + i - feature_map[j][1]``.
    """

    design: np.ndarray
    targets: np.ndarray
    feature_map: Tuple[Feature, ...]
    target_names: Tuple[str, ...]
    washout: int = 0
    offset: int = 0

    def __post_init__(self):
        design = np.asarray(self.design, dtype=np.float64)
        targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if design.ndim != 2 or design.shape[1] != len(self.feature_map):
            raise ValueError("design columns do not match feature_map")
        if design.shape[0] != targets.shape[1]:
            raise ValueError("design rows do not match target samples")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_map", tuple((str(n), int(l)) for n, l in self.feature_map))
        object.__setattr__(self, "target_names", tuple(self.target_names))

    @property
    def n_eff(self) -> int:
        return self.design.shape[0]

    @property
    def n_features(self) -> int:
        return self.design.shape[1]

    def rows(self, start: int, stop: Optional[int] = None) -> "LaggedDataset":
        """Contiguous row block, keeping the absolute-time bookkeeping."""
        if start < 0:
            start += self.n_eff
        return replace(
            self,
            design=self.design[start:stop],
            targets=self.targets[:, start:stop],
            offset=self.offset + start,
        )

    def columns(self, features: Sequence[Feature]) -> np.ndarray:
        """Column indices of ``features`` in this dataset."""
        index = {f: j for j, f in enumerate(self.feature_map)}
        try:
            return np.array([index[(str(n), int(l))] for n, l in features], dtype=int)
        except KeyError as exc:
            raise KeyError(f"feature {exc.args[0]} not in dataset") from None


def load_csv(path, schema: Mapping[str, str], sample_period: Optional[float] = None) -> RawSeries:
    """Read a headed CSV into a :class:`RawSeries`.

    ``schema`` maps column names to ``"input"``, ``"target"`` or ``"ignore"``;
    its key order fixes the variable order.  Columns absent from the schema
    are ignored.
    """
    roles = {"input", "target", "ignore"}
    for col, role in schema.items():
        if role not in roles:
            raise SchemaError(f"column {col!r}: unknown role {role!r}")
    input_cols = [c for c, r in schema.items() if r == "input"]
    target_cols = [c for c, r in schema.items() if r == "target"]
    if not input_cols or not target_cols:
        raise SchemaError("schema needs at least one input and one target column")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        missing = [c for c in input_cols + target_cols if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        wanted = [header.index(c) for c in input_cols + target_cols]
        rows: List[List[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                )
            values = []
            for j in wanted:
                try:
                    values.append(float(row[j]))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: column {header[j]!r}: cannot parse {row[j]!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no samples")
    data = np.array(rows, dtype=np.float64).T
    k = len(input_cols)
    return RawSeries(data[:k], data[k:], tuple(input_cols), tuple(target_cols), sample_period)


def save_csv(raw: RawSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(raw.names)
        for row in np.vstack([raw.inputs, raw.targets]).T:
            writer.writerow([repr(float(v)) for v in row])


def save_lagged_csv(d: LaggedDataset, path) -> None:
    """Write ``t``, one ``name@lag`` column per feature and ``target:name`` columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t"] + [f"{n}@{l}" for n, l in d.feature_map] + [f"target:{n}" for n in d.target_names]
        )
        for i in range(d.n_eff):
            writer.writerow(
                [d.offset + i]
                + [repr(float(v)) for v in d.design[i]]
                + [repr(float(v)) for v in d.targets[:, i]]
            )


def load_lagged_csv(path, washout: int = 0) -> LaggedDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = [[float(v) for v in row] for row in reader if row]
    if not body:
        raise ParseError(f"{path}: no samples")
    arr = np.array(body, dtype=np.float64)
    feats, tnames, fcols, tcols = [], [], [], []
    for j, h in enumerate(header[1:], start=1):
        if h.startswith("target:"):
            tnames.append(h[len("target:"):])
            tcols.append(j)
        else:
            name, lag = h.rsplit("@", 1)
            feats.append((name, int(lag)))
            fcols.append(j)
    return LaggedDataset(
        arr[:, fcols], arr[:, tcols].T, tuple(feats), tuple(tnames), washout, int(arr[0, 0])
    )


def _sysid_next(y0, y1, y2, u0, u1, form):
    # y0=y(n), y1=y(n-1), y2=y(n-2), u0=u(n), u1=u(n-1)
    den = 1.0 + y1 * y1 + y2 * y2
    if form == "narendra":
        return (y0 * y1 * y2 * u1 * (y2 - 1.0) + u0) / den
    return y0 * y1 * y2 * u1 * (y2 - 1.0 + u0) / den


def _sysid_test_input(n: int) -> np.ndarray:
    k = np.arange(n, dtype=np.float64)
    u = 0.3 * np.sin(np.pi * k / 125.0) + 0.2 * np.sin(np.pi * k / 25.0)
    late = k >= 500
    u[late] = 0.6 * np.sin(np.pi * k[late] / 25.0)
    return u


def simulate_sysid(n: int, phase: str = "train", seed: int = 0, form: str = "narendra"):
    """Simulate the third-order benchmark plant for ``n`` steps.

    Returns ``(u, y)``, both of length ``n``.  ``y[0:4]`` hold the phase's
    initial conditions and ``y[k+1]`` is computed from ``y[k], y[k-1],
    y[k-2], u[k], u[k-1]``.  ``form="narendra"`` is the classic plant with
    ``u(n)`` entering additively; ``form="as_printed"`` multiplies ``u(n)``
    into the numerator, which keeps both phases at zero after four steps.
    """
    if n < 5:
        raise ValueError(f"need n >= 5 samples, got {n}")
    if form not in ("narendra", "as_printed"):
        raise ValueError(f"unknown plant form {form!r}")
    if phase == "train":
        rng = np.random.default_rng(np.uint64(seed))
        u = rng.uniform(-0.7, 0.7, size=n)
        y0 = (0.0, 0.0, 0.0, 0.1)
    elif phase == "test":
        u = _sysid_test_input(n)
        y0 = (-0.3, -0.1, 0.3, 0.0)
    else:
        raise ValueError(f"phase must be 'train' or 'test', got {phase!r}")
    y = np.zeros(n)
    y[:4] = y0
    for k in range(3, n - 1):
        y[k + 1] = _sysid_next(y[k], y[k - 1], y[k - 2], u[k], u[k - 1], form)
    return u, y


def generate_sysid_series(n: int, phase: str = "train", seed: int = 0, form: str = "narendra") -> RawSeries:
    """Benchmark series arranged for one-step-ahead prediction.

    Sample ``i`` pairs the input ``u(i)`` with the target ``y(i+1)``, so a
    target lag of 1 is the current output ``y(i)`` and an input lag of 0 is
    the current input.  Same ``(n, phase, seed)`` gives identical arrays.
    """
    if n < 5:
        raise ValueError(f"need n >= 5 samples, got {n}")
    u, y = simulate_sysid(n + 1, phase, seed, form)
    return RawSeries(u[None, :n], y[None, 1:], ("u",), ("y",))


def build_lagged(raw: RawSeries, spec: LagSpec, washout: int = 0) -> LaggedDataset:
    """Lag-align ``raw`` per ``spec`` and drop ``washout`` leading rows.

    Columns are ordered inputs first then targets, each in series order,
    with lags ascending.
    """
    if spec.is_empty():
        raise LagSpecError("lag specification selects no features")
    for name in list(spec.input_lags) + list(spec.output_lags):
        if name not in raw.names:
            raise LagSpecError(f"unknown variable {name!r}")
    for name in spec.input_lags:
        if name not in raw.input_names:
            raise LagSpecError(f"{name!r} is a target; give its lags under output_lags")
    for name in spec.output_lags:
        if name not in raw.target_names:
            raise LagSpecError(f"{name!r} is not a target variable")
    if washout < 0:
        raise ValueError("washout must be non-negative")
    max_lag = spec.max_lag
    n = raw.n_samples
    if washout + max_lag >= n:
        raise ValueError(f"washout {washout} + max lag {max_lag} leaves no rows from {n} samples")

    offset = max_lag + washout
    t = np.arange(offset, n)
    features: List[Feature] = []
    cols = []
    for names, lag_map in ((raw.input_names, spec.input_lags), (raw.target_names, spec.output_lags)):
        for name in names:
            series = raw.variable(name)
            for lag in lag_map.get(name, ()):
                features.append((name, lag))
                cols.append(series[t - lag])
    return LaggedDataset(
        np.column_stack(cols), raw.targets[:, t], tuple(features), raw.target_names, washout, offset
    )


def add_gaussian_noise(raw: RawSeries, sigma_rel: float = 0.01, seed: int = 0) -> RawSeries:
    """Perturb targets with white noise of std ``sigma_rel * std(target)``."""
    if sigma_rel < 0:
        raise ValueError(f"sigma_rel must be >= 0, got {sigma_rel}")
    if sigma_rel == 0:
        return raw
    rng = np.random.default_rng(np.uint64(seed))
    scale = sigma_rel * raw.targets.std(axis=1, keepdims=True)
    noisy = raw.targets + scale * rng.standard_normal(raw.targets.shape)
    return replace(raw, targets=noisy)


@dataclass(frozen=True)
class Standardizer:
    """Training-set z-scoring of features and centering of targets.

    Constant features get ``scale`` 1 and are flagged in ``constant``; they
    map to exact zeros and are excluded from the sparse fit.
    """

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    constant: np.ndarray
    target_mean: np.ndarray
    target_scale: np.ndarray
    feature_map: Tuple[Feature, ...] = ()

    def transform_design(self, design: np.ndarray) -> np.ndarray:
        z = (np.asarray(design, dtype=np.float64) - self.feature_mean) / self.feature_scale
        z[..., self.constant] = 0.0
        return z

    def inverse_design(self, z: np.ndarray) -> np.ndarray:
        x = np.asarray(z, dtype=np.float64) * self.feature_scale + self.feature_mean
        return x

    def transform_targets(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(t, dtype=np.float64) - self.target_mean[:, None]

    def inverse_targets(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) + self.target_mean[:, None]

    def to_dict(self) -> dict:
        return {
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "constant": self.constant.tolist(),
            "target_mean": self.target_mean.tolist(),
            "target_scale": self.target_scale.tolist(),
            "feature_map": [list(f) for f in self.feature_map],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Standardizer":
        return cls(
            np.asarray(d["feature_mean"], dtype=np.float64),
            np.asarray(d["feature_scale"], dtype=np.float64),
            np.asarray(d["constant"], dtype=bool),
            np.asarray(d["target_mean"], dtype=np.float64),
            np.asarray(d["target_scale"], dtype=np.float64),
            tuple((str(n), int(l)) for n, l in d.get("feature_map", [])),
        )


def standardize_fit(train: LaggedDataset) -> Standardizer:
    if train.n_eff < 1:
        raise ValueError("cannot standardize an empty dataset")
    mean = train.design.mean(axis=0)
    scale = train.design.std(axis=0)
    constant = scale <= 1e-12 * (1.0 + np.abs(mean))
    scale = np.where(constant, 1.0, scale)
    tmean = train.targets.mean(axis=1)
    tscale = train.targets.std(axis=1)
    return Standardizer(mean, scale, constant, tmean, tscale, train.feature_map)


def standardize_apply(s: Standardizer, d: LaggedDataset) -> LaggedDataset:
    if s.feature_map and tuple(s.feature_map) != tuple(d.feature_map):
        raise ValueError("dataset features differ from the fitted standardizer")
    return replace(d, design=s.transform_design(d.design), targets=s.transform_targets(d.targets))
