"""Reservoir representation, state recursion, supervisory tests and readouts.

States are stored nodes-by-time, ``(N, n)``, and the readout acts on the
extended matrix ``[x(t); u(t)]`` of shape ``(N + K_R, n)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import linalg, sparse

from ._cd import coordinate_descent, polish_active_set, self_feedback_tanh

__all__ = [
    "NilpotentReservoirWarning",
    "SingularReadoutError",
    "InvalidCandidate",
    "ReservoirNet",
    "CandidateNode",
    "CandidateBatch",
    "Readout",
    "ConstraintResult",
    "compute_states",
    "extended",
    "spectral_radius",
    "scale_echo_state",
    "echo_state_alpha_bound",
    "draw_candidate",
    "draw_candidates",
    "candidate_states",
    "check_constraint",
    "xi_star",
    "batch_scores",
    "solve_readout_ridge",
    "solve_readout_ls",
    "solve_readout_elastic",
    "penalized_objective",
    "build_esn",
    "predict_compensated",
]

logger = logging.getLogger(__name__)

# coordinate-descent sweeps between active-set polish attempts
_CHUNK = 200


class NilpotentReservoirWarning(UserWarning):
    """Spectral radius is zero, so echo-state scaling was skipped."""


class SingularReadoutError(np.linalg.LinAlgError):
    """Unregularized readout on a rank-deficient state matrix."""


class InvalidCandidate(ValueError):
    """Candidate state norm outside ``(0, b_g)``."""


@dataclass(frozen=True)
class ReservoirNet:
    """Input weights ``(N, K_R)``, recurrent weights ``(N, N)``, biases ``(N,)``.

    Grown nets keep ``w_r`` lower triangular so adding node ``N + 1`` leaves
    the states of nodes ``1..N`` untouched.  ``triangular=False`` marks a
    conventional echo state network.
    """

    w_in: np.ndarray
    w_r: np.ndarray
    b: np.ndarray
    alpha: float
    triangular: bool = True

    def __post_init__(self):
        w_in = np.atleast_2d(np.asarray(self.w_in, dtype=np.float64))
        w_r = np.atleast_2d(np.asarray(self.w_r, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        n = w_in.shape[0]
        if w_r.shape != (n, n) or b.shape != (n,):
            raise ValueError(f"inconsistent shapes w_in {w_in.shape}, w_r {w_r.shape}, b {b.shape}")
        if n < 1:
            raise ValueError("a reservoir needs at least one node")
        if self.triangular and np.any(np.triu(w_r, 1)):
            raise ValueError("w_r has entries above the diagonal")
        if not (np.all(np.isfinite(w_in)) and np.all(np.isfinite(w_r)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite reservoir weights")
        object.__setattr__(self, "w_in", w_in)
        object.__setattr__(self, "w_r", w_r)
        object.__setattr__(self, "b", b)

    @property
    def n_nodes(self) -> int:
        return self.w_in.shape[0]

    @property
    def k_r(self) -> int:
        return self.w_in.shape[1]

    def with_node(self, w_in_row, w_r_row, bias) -> "ReservoirNet":
        """Append one node; ``w_r_row`` has ``N + 1`` entries, the last on the diagonal."""
        n = self.n_nodes
        w_r = np.zeros((n + 1, n + 1))
        w_r[:n, :n] = self.w_r
        w_r[n, :] = w_r_row
        return replace(
            self,
            w_in=np.vstack([self.w_in, np.asarray(w_in_row)[None, :]]),
            w_r=w_r,
            b=np.append(self.b, bias),
        )

    def truncated(self, n: int) -> "ReservoirNet":
        """Keep the first ``n`` nodes; exact for triangular nets."""
        if not self.triangular:
            raise ValueError("only triangular nets can be truncated without changing states")
        if not 1 <= n <= self.n_nodes:
            raise ValueError(f"cannot truncate {self.n_nodes} nodes to {n}")
        return replace(self, w_in=self.w_in[:n], w_r=self.w_r[:n, :n], b=self.b[:n])


class CandidateNode(NamedTuple):
    w_in_row: np.ndarray
    w_r_row: np.ndarray
    bias: float
    lambda_used: float
    g: np.ndarray


class CandidateBatch(NamedTuple):
    w_in: np.ndarray  # (G, K_R)
    w_r: np.ndarray  # (G, N + 1)
    bias: np.ndarray  # (G,)
    lambda_used: float
    g: np.ndarray  # (G, n)

    def node(self, i: int) -> CandidateNode:
        return CandidateNode(self.w_in[i], self.w_r[i], float(self.bias[i]), self.lambda_used, self.g[i])


@dataclass(frozen=True)
class Readout:
    w_out: np.ndarray  # (L, N + K_R)
    c: float = 0.0
    c_l: float = 0.0

    def __call__(self, x_ext: np.ndarray) -> np.ndarray:
        return self.w_out @ x_ext


class ConstraintResult(NamedTuple):
    passed: bool
    margins: np.ndarray


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def compute_states(net: ReservoirNet, u: np.ndarray, x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Run ``x(t) = tanh(W_in u(t) + W_r x(t-1) + b)`` over the columns of ``u``."""
    u = _as_2d(u)
    if u.shape[0] != net.k_r:
        raise ValueError(f"input has {u.shape[0]} rows, net expects {net.k_r}")
    x = np.zeros(net.n_nodes) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (net.n_nodes,) or not np.all(np.isfinite(x)):
        raise ValueError("x0 must be a finite vector with one entry per node")
    drive = net.w_in @ u + net.b[:, None]
    states = np.empty((net.n_nodes, u.shape[1]))
    w_r = net.w_r
    for t in range(u.shape[1]):
        x = np.tanh(drive[:, t] + w_r @ x)
        states[:, t] = x
    if not np.all(np.isfinite(states)):
        bad = int(np.argmax(~np.all(np.isfinite(states), axis=0)))
        raise FloatingPointError(f"non-finite reservoir state at step {bad}")
    return states


def extended(states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Readout regressors ``[x(t); u(t)]``."""
    return np.vstack([states, _as_2d(u)])


def spectral_radius(w_r: np.ndarray, triangular: bool = True) -> float:
    w_r = np.atleast_2d(w_r)
    if triangular:
        return float(np.max(np.abs(np.diag(w_r)))) if w_r.size else 0.0
    return float(np.max(np.abs(np.linalg.eigvals(w_r))))


def echo_state_alpha_bound(w_r: np.ndarray) -> float:
    """``rho(W_r) / sigma_max(W_r)`` of the unscaled matrix (0 if W_r is zero)."""
    sigma = float(np.linalg.norm(w_r, 2))
    if sigma == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(w_r)))) / sigma


def scale_echo_state(w_r: np.ndarray, alpha: float, warn_bound: bool = True) -> np.ndarray:
    """Rescale a triangular ``w_r`` so its spectral radius is ``alpha``.

    A nilpotent matrix (zero diagonal) is returned unchanged with a
    :class:`NilpotentReservoirWarning`.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    w_r = np.array(w_r, dtype=np.float64)
    rho = spectral_radius(w_r)
    if rho == 0:
        warnings.warn("zero spectral radius; echo-state scaling skipped", NilpotentReservoirWarning, stacklevel=2)
        return w_r
    if warn_bound:
        bound = echo_state_alpha_bound(w_r)
        if alpha >= bound:
            logger.warning("alpha=%g exceeds the rho/sigma_max bound %.4g of this reservoir", alpha, bound)
    scaled = (alpha / rho) * w_r
    # pin the diagonal maximum exactly so repeated scaling is an identity
    i = int(np.argmax(np.abs(np.diag(scaled))))
    scaled[i, i] = np.copysign(alpha, scaled[i, i])
    return scaled


def _normalize_rows(w_r_rows: np.ndarray, rho_now: float, alpha: float) -> np.ndarray:
    # Rows whose self-feedback would set a new spectral radius are rescaled so
    # their diagonal lands on +-alpha; existing nodes are never touched.
    d = np.abs(w_r_rows[:, -1])
    scale = np.ones_like(d)
    grow = (d > rho_now) | ((rho_now == 0) & (d > 0))
    scale[grow] = alpha / d[grow]
    out = w_r_rows * scale[:, None]
    out[grow, -1] = np.copysign(alpha, w_r_rows[grow, -1])
    return out


def _recur(drive: np.ndarray, diag: np.ndarray, x0: Optional[np.ndarray] = None) -> np.ndarray:
    g = np.tanh(drive)
    rec = np.flatnonzero(diag)
    if rec.size:
        prev = np.zeros(rec.size) if x0 is None else np.asarray(x0, dtype=np.float64)[rec]
        g[rec] = self_feedback_tanh(np.ascontiguousarray(drive[rec]), diag[rec].astype(np.float64), prev)
    return g


def candidate_states(w_in, w_r_rows, bias, u, states):
    """States of candidate nodes driven by ``u`` on top of existing ``states``."""
    u = _as_2d(u)
    n_old = w_r_rows.shape[1] - 1
    drive = w_in @ u + bias[:, None]
    if n_old:
        w_old = w_r_rows[:, :n_old]
        if np.count_nonzero(w_old) < 0.25 * w_old.size:
            # typical sparse rows: multiply only the nonzeros
            contrib = np.asarray(sparse.csr_matrix(w_old) @ states[:, :-1])
        else:
            contrib = w_old @ states[:, :-1]
        drive[:, 1:] += contrib
    return _recur(drive, w_r_rows[:, -1])


def draw_candidates(
    net: ReservoirNet,
    lam: float,
    sparsity: float,
    rng: np.random.Generator,
    u: np.ndarray,
    states: np.ndarray,
    count: int,
) -> CandidateBatch:
    """Draw ``count`` candidate nodes uniformly on ``[-lam, lam]``.

    Input weights and bias are dense; each recurrent entry is nonzero with
    probability ``sparsity``.  A candidate whose self-feedback would exceed
    the current spectral radius has its recurrent row rescaled so the grown
    matrix sits at radius ``net.alpha``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if not 0 < sparsity <= 1:
        raise ValueError("sparsity must lie in (0, 1]")
    n, k = net.n_nodes, net.k_r
    w_in = rng.uniform(-lam, lam, size=(count, k))
    bias = rng.uniform(-lam, lam, size=count)
    mask = rng.random((count, n + 1)) < sparsity
    w_r = np.where(mask, rng.uniform(-lam, lam, size=(count, n + 1)), 0.0)
    w_r = _normalize_rows(w_r, spectral_radius(net.w_r), net.alpha)
    g = candidate_states(w_in, w_r, bias, u, states)
    return CandidateBatch(w_in, w_r, bias, float(lam), g)


def draw_candidate(net, lam, sparsity, rng, u, states) -> CandidateNode:
    return draw_candidates(net, lam, sparsity, rng, u, states, 1).node(0)


def _check_params(c, r, mu):
    if not 0 <= c < 1:
        raise ValueError(f"c must lie in [0, 1), got {c}")
    if not 0 < r < 1:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    if not 0 <= mu <= 1 - r + 1e-15:
        raise ValueError(f"mu must lie in [0, 1 - r], got {mu}")


def check_constraint(e_n, g, b_g: float, c: float, r: float, mu: float) -> ConstraintResult:
    """Regularized supervisory inequality, one margin per output.

    ``margin_q = <e_q, g>^2 - (b_g^2 + c)^2 / (b_g^2 + 2c) * (1 - r - mu) * ||e_q||^2``;
    with ``c = 0`` the factor is exactly ``b_g^2``.
    """
    _check_params(c, r, mu)
    e = _as_2d(e_n)
    g = np.asarray(g, dtype=np.float64)
    gnorm = float(np.linalg.norm(g))
    if not 0 < gnorm < b_g:
        raise InvalidCandidate(f"||g|| = {gnorm:g} outside (0, {b_g:g})")
    bg2 = b_g * b_g
    factor = bg2 if c == 0 else (bg2 + c) ** 2 / (bg2 + 2 * c)
    margins = (e @ g) ** 2 - factor * (1 - r - mu) * np.einsum("ij,ij->i", e, e)
    return ConstraintResult(bool(np.all(margins >= 0)), margins)


def xi_star(e_n, g, c: float, r: float, mu: float) -> Tuple[np.ndarray, float]:
    """Per-output node scores and their sum; ``c = 0`` gives the unregularized score."""
    _check_params(c, r, mu)
    e = _as_2d(e_n)
    g = np.asarray(g, dtype=np.float64)
    gg = float(g @ g)
    if gg == 0:
        raise InvalidCandidate("g is identically zero")
    rho_g = gg if c == 0 else (gg + c) ** 2 / (gg + 2 * c)
    xi = (e @ g) ** 2 / rho_g - (1 - r - mu) * np.einsum("ij,ij->i", e, e)
    return xi, float(xi.sum())


def batch_scores(e_n, g_batch, b_g, c, r, mu):
    """Vectorized :func:`xi_star` and :func:`check_constraint` over candidate rows.

    Returns ``(xi, margins, valid)``, each row one candidate; ``valid`` marks
    ``0 < ||g|| < b_g``.
    """
    e = _as_2d(e_n)
    inner2 = (g_batch @ e.T) ** 2
    ee = np.einsum("ij,ij->i", e, e)
    gg = np.einsum("ij,ij->i", g_batch, g_batch)
    valid = (gg > 0) & (gg < b_g * b_g)
    safe = np.where(gg > 0, gg, 1.0)
    rho_g = safe if c == 0 else (safe + c) ** 2 / (safe + 2 * c)
    bg2 = b_g * b_g
    factor = bg2 if c == 0 else (bg2 + c) ** 2 / (bg2 + 2 * c)
    xi = inner2 / rho_g[:, None] - (1 - r - mu) * ee[None, :]
    margins = inner2 - factor * (1 - r - mu) * ee[None, :]
    return xi, margins, valid


def solve_readout_ridge(x_ext: np.ndarray, y_hat: np.ndarray, c: float) -> Readout:
    """``W_out' = (X X' + c I)^-1 X Y'`` by Cholesky."""
    if c < 0:
        raise ValueError("c must be non-negative")
    x = np.asarray(x_ext, dtype=np.float64)
    y = _as_2d(y_hat)
    if x.shape[1] != y.shape[1]:
        raise ValueError("state and target sample counts differ")
    if c == 0 and np.linalg.matrix_rank(x) < x.shape[0]:
        raise SingularReadoutError("state matrix is rank deficient; use c > 0")
    a = x @ x.T
    a[np.diag_indices_from(a)] += c
    try:
        w = linalg.cho_solve(linalg.cho_factor(a, lower=True, check_finite=False), x @ y.T)
    except linalg.LinAlgError as exc:
        raise SingularReadoutError(f"normal matrix not positive definite ({exc}); use c > 0") from None
    return Readout(w.T, float(c))


def solve_readout_ls(x_ext: np.ndarray, y_hat: np.ndarray) -> Readout:
    """Minimum-norm least squares."""
    x = np.asarray(x_ext, dtype=np.float64)
    y = _as_2d(y_hat)
    w, *_ = np.linalg.lstsq(x.T, y.T, rcond=None)
    return Readout(w.T, 0.0)


def solve_readout_elastic(
    x_ext: np.ndarray,
    y_hat: np.ndarray,
    c_l: float,
    c: float,
    w0: Optional[np.ndarray] = None,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> Readout:
    """``min ||W X - Y||^2 + c_l ||W||_1 + c ||W||^2`` by coordinate descent.

    Reservoir states are often nearly collinear, which makes plain cyclic
    descent crawl.  Every ``_CHUNK`` sweeps the current support is handed to
    an exact sign-constrained solve; its answer is kept only if it passes
    the KKT check.
    """
    if c_l < 0 or c < 0:
        raise ValueError("penalties must be non-negative")
    x = np.asarray(x_ext, dtype=np.float64)
    y = _as_2d(y_hat)
    gram = x @ x.T
    xty = x @ y.T
    w = np.zeros((y.shape[0], x.shape[0]))
    for q in range(y.shape[0]):
        wq = None if w0 is None else w0[q]
        done, ok = 0, False
        while done < max_iter and not ok:
            sweeps = min(_CHUNK, max_iter - done)
            wq, it, ok = coordinate_descent(gram, xty[:, q], c_l, c, wq, None, tol, sweeps)
            done += it
            if not ok:
                wq, ok = polish_active_set(gram, xty[:, q], wq, c_l, c)
        if not ok:
            logger.warning("elastic-net readout did not converge in %d sweeps", max_iter)
        w[q] = wq
    return Readout(w, float(c), float(c_l))


def penalized_objective(readout: Readout, x_ext: np.ndarray, y_hat: np.ndarray) -> float:
    """``||W X - Y||^2 + c ||W||^2 + c_l ||W||_1`` for the readout's own penalties."""
    r = readout.w_out @ x_ext - _as_2d(y_hat)
    w = readout.w_out
    return float(np.sum(r * r) + readout.c * np.sum(w * w) + readout.c_l * np.sum(np.abs(w)))


def _power_radius(w: np.ndarray, rng: np.random.Generator, max_iter: int = 1000, tol: float = 1e-10):
    v = rng.standard_normal(w.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        nv = w @ v
        norm = np.linalg.norm(nv)
        if norm == 0:
            return 0.0
        # two-step ratio tolerates a dominant complex-conjugate pair
        nv2 = w @ (nv / norm)
        new = np.sqrt(norm * np.linalg.norm(nv2))
        v = nv2 / np.linalg.norm(nv2) if np.linalg.norm(nv2) > 0 else nv / norm
        if abs(new - est) <= tol * max(new, 1e-300):
            return float(new)
        est = new
    return None


def build_esn(k_r: int, n_nodes: int, lam: float, sparsity: float, alpha: float, seed: int = 0) -> ReservoirNet:
    """Conventional echo state reservoir drawn in one shot.

    Dense input weights and biases on ``[-lam, lam]``, a sparse recurrent
    matrix rescaled to spectral radius ``alpha``.
    """
    if n_nodes < 1 or k_r < 1:
        raise ValueError("need at least one node and one input")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    rng = np.random.default_rng(np.uint64(seed))
    w_in = rng.uniform(-lam, lam, size=(n_nodes, k_r))
    b = rng.uniform(-lam, lam, size=n_nodes)
    mask = rng.random((n_nodes, n_nodes)) < sparsity
    w_r = np.where(mask, rng.uniform(-lam, lam, size=(n_nodes, n_nodes)), 0.0)
    rho = _power_radius(w_r, rng)
    if rho is None:
        if n_nodes > 500:
            raise RuntimeError("power iteration did not converge and the reservoir is too large for eigvals")
        rho = spectral_radius(w_r, triangular=False)
    if rho > 0:
        w_r = w_r * (alpha / rho)
    else:
        warnings.warn("zero spectral radius; echo-state scaling skipped", NilpotentReservoirWarning, stacklevel=2)
    return ReservoirNet(w_in, w_r, b, alpha, triangular=False)


def predict_compensated(net, readout, lasso_model, u_r, full_design, x0=None) -> np.ndarray:
    """``Y_LASSO + W_out [x; u_R]`` in target units.

    ``u_r`` is the ``(K_R, n)`` reservoir input, ``full_design`` the raw
    ``(n, F)`` lagged design the sparse model was fitted on.
    """
    u_r = _as_2d(u_r)
    full_design = np.asarray(full_design, dtype=np.float64)
    if full_design.shape[0] != u_r.shape[1]:
        raise ValueError("reservoir input and lagged design are not aligned")
    y_res = readout(extended(compute_states(net, u_r, x0), u_r))
    if lasso_model is None:
        return y_res
    return lasso_model.predict_design(full_design) + y_res
