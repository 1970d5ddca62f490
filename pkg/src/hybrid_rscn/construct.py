"""Incremental reservoir construction under the supervisory mechanism.

:func:`grow` starts from a few random nodes, then repeatedly draws candidate
nodes, keeps those that satisfy the (optionally regularized) inequality
constraint, adds the best-scoring one, and re-solves the global readout.
Validation error drives early stopping.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .reservoir import (
    NilpotentReservoirWarning,
    Readout,
    ReservoirNet,
    batch_scores,
    candidate_states,
    check_constraint,
    compute_states,
    draw_candidates,
    extended,
    penalized_objective,
    scale_echo_state,
    solve_readout_elastic,
    solve_readout_ls,
    solve_readout_ridge,
    xi_star,
)

__all__ = [
    "ScTrainConfig",
    "NodeRecord",
    "BuildReport",
    "ConstructionError",
    "TrainingData",
    "grow",
    "early_stop_triggered",
    "solve_readout",
    "default_b_g",
]

logger = logging.getLogger(__name__)

LAMBDA_GRID = (0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 50.0, 100.0)
R_LIST = (0.9, 0.99, 0.999, 0.9999, 0.99999)


@dataclass(frozen=True)
class ScTrainConfig:
    """Construction hyperparameters.

    ``c`` is both the ridge coefficient and the constraint regularizer.
    ``readout`` picks the output-weight solver: ``"ridge"``, ``"ls"`` or
    ``"elastic"`` (the latter also uses ``c_l_readout``).
    """

    n_max_nodes: int = 300
    n_step: int = 3
    epsilon: float = 1e-5
    lambda_grid: Tuple[float, ...] = LAMBDA_GRID
    g_max: int = 100
    r_list: Tuple[float, ...] = R_LIST
    c: float = 1e-3
    sparsity: float = 0.03
    alpha: float = 0.9
    seed: int = 0
    initial_nodes: int = 5
    readout: str = "ridge"
    c_l_readout: float = 0.0
    max_escalations: int = 3

    def __post_init__(self):
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        object.__setattr__(self, "r_list", tuple(float(v) for v in self.r_list))
        if not 1 <= self.initial_nodes <= self.n_max_nodes:
            raise ValueError("need 1 <= initial_nodes <= n_max_nodes")
        if not 0 < self.n_step < self.n_max_nodes:
            raise ValueError("need 0 < n_step < n_max_nodes")
        if not self.lambda_grid or any(v <= 0 for v in self.lambda_grid):
            raise ValueError("lambda_grid must be non-empty and positive")
        if list(self.lambda_grid) != sorted(self.lambda_grid):
            raise ValueError("lambda_grid must be ascending")
        if not self.r_list or any(not 0 < v < 1 for v in self.r_list):
            raise ValueError("r_list values must lie in (0, 1)")
        if list(self.r_list) != sorted(self.r_list):
            raise ValueError("r_list must be ascending")
        if not 0 <= self.c < 1:
            raise ValueError("c must lie in [0, 1)")
        if not 0 < self.sparsity <= 1:
            raise ValueError("sparsity must lie in (0, 1]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.readout not in ("ridge", "ls", "elastic"):
            raise ValueError(f"unknown readout {self.readout!r}")
        if self.g_max < 1 or self.max_escalations < 0:
            raise ValueError("g_max must be >= 1 and max_escalations >= 0")

    @property
    def constraint_c(self) -> float:
        # the plain least-squares readout pairs with the unregularized constraint
        return 0.0 if self.readout == "ls" else self.c

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_grid"] = list(self.lambda_grid)
        d["r_list"] = list(self.r_list)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScTrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown construction keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class NodeRecord:
    node_index: int
    lam: float
    r: float
    mu: float
    xi: float
    xi_min: float
    margin: float
    train_error: float
    objective: float
    val_nrmse: float
    pool_size: int
    escalations: int


@dataclass
class BuildReport:
    records: List[NodeRecord] = field(default_factory=list)
    initial_error: float = float("nan")
    initial_objective: float = float("nan")
    initial_val_nrmse: float = float("nan")
    stop_reason: str = ""
    final_n: int = 0
    b_g: float = float("nan")
    val_history: List[float] = field(default_factory=list)

    def to_csv(self, path) -> None:
        names = list(NodeRecord.__dataclass_fields__)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for rec in self.records:
                writer.writerow([getattr(rec, k) for k in names])

    def summary(self) -> dict:
        return {
            "final_n": self.final_n,
            "stop_reason": self.stop_reason,
            "accepted": len(self.records),
            "initial_error": self.initial_error,
            "b_g": self.b_g,
        }


class ConstructionError(RuntimeError):
    """No candidate passed the constraint at any lambda or contraction level."""

    def __init__(self, message: str, report: BuildReport):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TrainingData:
    """Reservoir input ``(K_R, n)`` and target ``(L, n)``.

    The first ``washout`` columns drive the reservoir but are excluded from
    fitting and scoring.  ``offset`` (same shape as ``y_hat``) is added to
    both prediction and target when computing NRMSE, so a residual model can
    be scored in plant units.
    """

    u_r: np.ndarray
    y_hat: np.ndarray
    washout: int = 0
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u_r, dtype=np.float64))
        y = np.atleast_2d(np.asarray(self.y_hat, dtype=np.float64))
        if u.shape[1] != y.shape[1]:
            raise ValueError("u_r and y_hat have different sample counts")
        if not 0 <= self.washout < u.shape[1]:
            raise ValueError("washout leaves no samples")
        object.__setattr__(self, "u_r", u)
        object.__setattr__(self, "y_hat", y)
        if self.offset is not None:
            object.__setattr__(self, "offset", np.atleast_2d(np.asarray(self.offset, dtype=np.float64)))

    @property
    def n_fit(self) -> int:
        return self.u_r.shape[1] - self.washout


def default_b_g(n_eff: int) -> float:
    # tanh keeps every state inside (-1, 1), so ||g|| < sqrt(n_eff)
    return float(np.sqrt(n_eff) * (1 + 1e-6))


def early_stop_triggered(history: Sequence[float], n_step: int) -> bool:
    """True when the last ``n_step + 1`` validation errors never decrease."""
    if len(history) < n_step + 1:
        return False
    tail = np.asarray(history[-(n_step + 1):])
    return bool(np.all(np.diff(tail) >= 0))


def solve_readout(cfg: ScTrainConfig, x_ext: np.ndarray, y: np.ndarray, w0=None) -> Readout:
    if cfg.readout == "ridge":
        return solve_readout_ridge(x_ext, y, cfg.c)
    if cfg.readout == "ls":
        return solve_readout_ls(x_ext, y)
    return solve_readout_elastic(x_ext, y, cfg.c_l_readout, cfg.c, w0=w0)


def _nrmse(pred: np.ndarray, target: np.ndarray) -> float:
    var = target.var(axis=1)
    if np.any(var <= 0):
        return float("nan")
    return float(np.mean(np.sqrt(np.mean((pred - target) ** 2, axis=1) / var)))


def _validation_nrmse(readout: Readout, x_ext_val: np.ndarray, val: TrainingData) -> float:
    w = val.washout
    pred = readout(x_ext_val[:, w:])
    target = val.y_hat[:, w:]
    if val.offset is not None:
        pred = pred + val.offset[:, w:]
        target = target + val.offset[:, w:]
    return _nrmse(pred, target)


def _initial_net(cfg: ScTrainConfig, k_r: int, rng: np.random.Generator) -> ReservoirNet:
    lam = cfg.lambda_grid[0]
    n = cfg.initial_nodes
    w_in = rng.uniform(-lam, lam, size=(n, k_r))
    b = rng.uniform(-lam, lam, size=n)
    mask = np.tril(rng.random((n, n)) < cfg.sparsity)
    w_r = np.where(mask, rng.uniform(-lam, lam, size=(n, n)), 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NilpotentReservoirWarning)
        w_r = scale_echo_state(w_r, cfg.alpha, warn_bound=False)
    return ReservoirNet(w_in, w_r, b, cfg.alpha)


def _node_states(node_w_in, node_w_r, bias, u, states):
    return candidate_states(node_w_in[None, :], node_w_r[None, :], np.array([bias]), u, states)[0]


def grow(
    train: TrainingData,
    val: TrainingData,
    cfg: ScTrainConfig,
    on_node: Optional[Callable[[ReservoirNet, Readout, BuildReport], None]] = None,
):
    """Build a reservoir node by node.

    Returns ``(net, readout, report)``.  ``on_node`` is called after every
    accepted node with the current net, readout and report.

    Raises:
        ConstructionError: no candidate passed at any lambda after every
            contraction escalation; the partial report is attached.
    """
    if train.u_r.shape[0] != val.u_r.shape[0]:
        raise ValueError("train and validation inputs differ in dimension")
    rng = np.random.default_rng(np.uint64(cfg.seed))
    w = train.washout
    n_fit = train.n_fit
    b_g = default_b_g(n_fit)
    cc = cfg.constraint_c
    report = BuildReport(b_g=b_g)

    net = _initial_net(cfg, train.u_r.shape[0], rng)
    states = compute_states(net, train.u_r)
    val_states = compute_states(net, val.u_r)
    x_fit = extended(states[:, w:], train.u_r[:, w:])
    y_fit = train.y_hat[:, w:]
    readout = solve_readout(cfg, x_fit, y_fit)
    e0 = y_fit - readout(x_fit)
    err = float(np.linalg.norm(e0))
    report.initial_error = err
    report.initial_objective = penalized_objective(readout, x_fit, y_fit)
    history = [_validation_nrmse(readout, extended(val_states, val.u_r), val)]
    report.initial_val_nrmse = history[0]

    while net.n_nodes < cfg.n_max_nodes and err > cfg.epsilon:
        n = net.n_nodes
        r_idx = 0
        r = cfg.r_list[0]
        escalations = 0
        chosen = None
        while chosen is None:
            mu = (1 - r) / (n + 1)
            for lam in cfg.lambda_grid:
                batch = draw_candidates(net, lam, cfg.sparsity, rng, train.u_r, states, cfg.g_max)
                xi, margins, valid = batch_scores(e0, batch.g[:, w:], b_g, cc, r, mu)
                ok = valid & np.all(margins >= 0, axis=1) & np.all(xi >= 0, axis=1)
                if ok.any():
                    totals = np.where(ok, xi.sum(axis=1), -np.inf)
                    best = int(np.argmax(totals))
                    chosen = (batch, best, lam, r, mu, int(ok.sum()), xi[best], margins[best])
                    break
            if chosen is not None:
                break
            if escalations < cfg.max_escalations:
                r = r + rng.uniform(0.0, 1.0 - r)
                escalations += 1
                continue
            nxt = [v for v in cfg.r_list if v > r]
            if not nxt:
                report.final_n = net.n_nodes
                report.stop_reason = "constructive-failure"
                raise ConstructionError(
                    f"no admissible candidate for node {n + 1} after {escalations} escalations "
                    f"(r reached {r:.6g})",
                    report,
                )
            r = nxt[0]
            escalations = 0

        batch, best, lam, r, mu, pool, xi_b, margin_b = chosen
        node = batch.node(best)
        net = net.with_node(node.w_in_row, node.w_r_row, node.bias)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NilpotentReservoirWarning)
            rescaled = scale_echo_state(net.w_r, cfg.alpha, warn_bound=False)
        if not np.array_equal(rescaled, net.w_r):
            # candidate normalization already put the radius at alpha
            raise AssertionError("echo-state rescale modified existing nodes")
        states = np.vstack([states, node.g[None, :]])
        val_states = np.vstack(
            [val_states, _node_states(node.w_in_row, node.w_r_row, node.bias, val.u_r, val_states)]
        )
        x_fit = extended(states[:, w:], train.u_r[:, w:])
        prev = readout
        w0 = None
        if cfg.readout == "elastic":
            # warm start: previous weights with a zero for the new node
            w0 = np.insert(prev.w_out, n, 0.0, axis=1)
        readout = solve_readout(cfg, x_fit, y_fit, w0)
        e0 = y_fit - readout(x_fit)
        err = float(np.linalg.norm(e0))
        val_err = _validation_nrmse(readout, extended(val_states, val.u_r), val)
        history.append(val_err)
        report.records.append(
            NodeRecord(
                node_index=net.n_nodes,
                lam=lam,
                r=r,
                mu=mu,
                xi=float(xi_b.sum()),
                xi_min=float(xi_b.min()),
                margin=float(margin_b.min()),
                train_error=err,
                objective=penalized_objective(readout, x_fit, y_fit),
                val_nrmse=val_err,
                pool_size=pool,
                escalations=escalations,
            )
        )
        if on_node is not None:
            on_node(net, readout, report)
        if net.n_nodes > cfg.n_step and early_stop_triggered(history, cfg.n_step):
            keep = net.n_nodes - cfg.n_step
            net = net.truncated(keep)
            states = states[:keep]
            x_fit = extended(states[:, w:], train.u_r[:, w:])
            readout = solve_readout(cfg, x_fit, y_fit)
            report.stop_reason = "early-stop"
            report.final_n = keep
            report.val_history = history
            return net, readout, report

    report.stop_reason = "tolerance" if err <= cfg.epsilon else "max-nodes"
    report.final_n = net.n_nodes
    report.val_history = history
    return net, readout, report
