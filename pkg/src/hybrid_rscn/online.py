"""Streaming prediction with projection-algorithm readout adaptation.

The sparse linear part stays frozen; only the reservoir readout moves, by the
smallest change that makes it reproduce the newest residual observation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable, List, NamedTuple, Optional, Tuple

import numpy as np

from .metrics import nrmse
from .reservoir import Readout, ReservoirNet

__all__ = [
    "SequencingError",
    "OnlineState",
    "StreamSample",
    "Trajectory",
    "init_state",
    "step",
    "run_stream",
    "stream_from_arrays",
]

DEFAULT_GUARD = 1e-8


class SequencingError(ValueError):
    """Stream samples arrived out of order or with gaps."""


@dataclass(frozen=True)
class OnlineState:
    x: np.ndarray  # (N,)
    w_out: np.ndarray  # (L, N + K_R)
    step: int = 0
    guard: float = DEFAULT_GUARD

    def __post_init__(self):
        if not self.guard > 0:
            raise ValueError("guard must be positive")
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        w = np.atleast_2d(np.asarray(self.w_out, dtype=np.float64))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise FloatingPointError("non-finite online state")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w_out", w)


class StreamSample(NamedTuple):
    """One time step: selected-order input, full lagged row, measured output."""

    index: int
    u_r: np.ndarray
    full: np.ndarray
    y_obs: np.ndarray


def init_state(net: ReservoirNet, readout: Readout, x0=None, guard: float = DEFAULT_GUARD) -> OnlineState:
    x = np.zeros(net.n_nodes) if x0 is None else x0
    if readout.w_out.shape[1] != net.n_nodes + net.k_r:
        raise ValueError("readout width does not match the reservoir")
    return OnlineState(x, readout.w_out.copy(), 0, guard)


def _advance(net: ReservoirNet, x: np.ndarray, u_r: np.ndarray) -> np.ndarray:
    return np.tanh(net.w_in @ u_r + net.w_r @ x + net.b)


def step(state: OnlineState, net: ReservoirNet, u_r, y_obs, adapt: bool = True):
    """Advance one sample; returns ``(prediction, new_state)``.

    The prediction uses the readout from before this sample.  With
    ``adapt`` the readout then moves to
    ``W + (y_obs - W g) g^T / max(guard, g^T g)`` where ``g = [x; u_r]``.
    The guard only protects a vanishing ``g``; otherwise the update is the
    exact projection, so the new readout reproduces ``y_obs`` on ``g``.
    """
    u_r = np.asarray(u_r, dtype=np.float64).reshape(-1)
    y_obs = np.asarray(y_obs, dtype=np.float64).reshape(-1)
    if u_r.shape != (net.k_r,) or y_obs.shape != (state.w_out.shape[0],):
        raise ValueError("sample shapes do not match the model")
    if not (np.all(np.isfinite(u_r)) and np.all(np.isfinite(y_obs))):
        raise FloatingPointError(f"non-finite sample at step {state.step}")
    x = _advance(net, state.x, u_r)
    g = np.concatenate([x, u_r])
    pred = state.w_out @ g
    w = state.w_out
    if adapt:
        w = w + np.outer(y_obs - pred, g) / max(state.guard, float(g @ g))
    return pred, OnlineState(x, w, state.step + 1, state.guard)


@dataclass
class Trajectory:
    y_lasso: np.ndarray  # (L, n)
    y_reservoir: np.ndarray
    y_obs: np.ndarray
    cumulative_nrmse: np.ndarray  # (n,)
    final_state: Optional[OnlineState] = None
    start_index: int = 0

    @property
    def y_total(self) -> np.ndarray:
        return self.y_lasso + self.y_reservoir

    @property
    def error(self) -> np.ndarray:
        return self.y_obs - self.y_total

    def __len__(self):
        return self.y_obs.shape[1]

    def nrmse(self, start: int = 0, stop: Optional[int] = None) -> float:
        """NRMSE of ``y_total`` over a window of positions in the trajectory."""
        return nrmse(self.y_total[:, start:stop], self.y_obs[:, start:stop])

    def to_csv(self, path) -> None:
        L = self.y_obs.shape[0]
        cols = ["y_lasso", "y_reservoir", "y_total", "y_obs", "error"]
        header = ["step"]
        for c in cols:
            header += [c] if L == 1 else [f"{c}[{q}]" for q in range(L)]
        header.append("cumulative_nrmse")
        data = [self.y_lasso, self.y_reservoir, self.y_total, self.y_obs, self.error]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for t in range(len(self)):
                row = [self.start_index + t]
                for arr in data:
                    row += [repr(float(v)) for v in arr[:, t]]
                row.append(repr(float(self.cumulative_nrmse[t])))
                wr.writerow(row)


def _running_nrmse(pred: np.ndarray, obs: np.ndarray) -> np.ndarray:
    # expanding-window NRMSE; undefined (nan) until the observations vary
    n = obs.shape[1]
    k = np.arange(1, n + 1)
    sse = np.cumsum((pred - obs) ** 2, axis=1)
    s1 = np.cumsum(obs, axis=1)
    s2 = np.cumsum(obs**2, axis=1)
    var = s2 / k - (s1 / k) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.sqrt(sse / (k * var))
    per[:, var.min(axis=0) <= 1e-300] = np.nan
    return per.mean(axis=0)


def run_stream(
    net: ReservoirNet,
    readout0: Readout,
    lasso_model,
    stream: Iterable[StreamSample],
    adapt: bool = True,
    x0=None,
    guard: float = DEFAULT_GUARD,
) -> Trajectory:
    """Predict a stream sample by sample, optionally adapting the readout.

    ``lasso_model`` may be None for a reservoir-only model.  The residual
    target for adaptation is ``y_obs - y_lasso``.
    """
    state = init_state(net, readout0, x0, guard)
    ys_l: List[np.ndarray] = []
    ys_r: List[np.ndarray] = []
    ys_o: List[np.ndarray] = []
    first = None
    prev = None
    L = readout0.w_out.shape[0]
    for s in stream:
        if prev is not None and s.index != prev + 1:
            raise SequencingError(f"sample index {s.index} follows {prev}")
        if first is None:
            first = s.index
        prev = s.index
        y_obs = np.asarray(s.y_obs, dtype=np.float64).reshape(-1)
        if lasso_model is None:
            y_l = np.zeros(L)
        else:
            y_l = lasso_model.predict_design(np.asarray(s.full, dtype=np.float64)[None, :])[:, 0]
        pred, state = step(state, net, s.u_r, y_obs - y_l, adapt)
        ys_l.append(y_l)
        ys_r.append(pred)
        ys_o.append(y_obs)
    if first is None:
        raise SequencingError("empty stream")
    y_l = np.array(ys_l).T
    y_r = np.array(ys_r).T
    y_o = np.array(ys_o).T
    return Trajectory(y_l, y_r, y_o, _running_nrmse(y_l + y_r, y_o), state, first)


def stream_from_arrays(u_r: np.ndarray, full_design: np.ndarray, targets: np.ndarray, start: int = 0):
    """Yield :class:`StreamSample` items from batch-shaped arrays."""
    u_r = np.atleast_2d(u_r)
    targets = np.atleast_2d(targets)
    full_design = np.asarray(full_design)
    if not (u_r.shape[1] == full_design.shape[0] == targets.shape[1]):
        raise ValueError("stream arrays are not aligned")
    for t in range(u_r.shape[1]):
        yield StreamSample(start + t, u_r[:, t], full_design[t], targets[:, t])
