"""Compiled inner loops: covariance-form coordinate descent and the
self-feedback recursion used for candidate reservoir nodes."""

import numba
import numpy as np


@numba.njit(cache=True)
def _cd_gram(gram, xty, w, l1, l2, active, tol, max_iter):
    # minimizes w'Gw - 2 b'w + l1*|w|_1 + l2*|w|^2 in place
    p = w.shape[0]
    q = gram @ w
    half = 0.5 * l1
    n_iter = 0
    converged = False
    for it in range(max_iter):
        n_iter = it + 1
        max_delta = 0.0
        for j in range(p):
            if not active[j]:
                continue
            gjj = gram[j, j]
            old = w[j]
            rho = xty[j] - q[j] + gjj * old
            if rho > half:
                new = (rho - half) / (gjj + l2)
            elif rho < -half:
                new = (rho + half) / (gjj + l2)
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                w[j] = new
                for k in range(p):
                    q[k] += gram[k, j] * delta
                ad = abs(delta)
                if ad > max_delta:
                    max_delta = ad
        if max_delta < tol:
            # small steps can still leave a gradient residual of order
            # tol * ||G||, so also require the KKT conditions to hold to tol
            worst = 0.0
            for j in range(p):
                if not active[j]:
                    continue
                g = 2.0 * (xty[j] - q[j]) - 2.0 * l2 * w[j]
                if w[j] > 0.0:
                    v = abs(g - l1)
                elif w[j] < 0.0:
                    v = abs(g + l1)
                else:
                    v = abs(g) - l1
                if v > worst:
                    worst = v
            if worst <= tol:
                converged = True
                break
    return n_iter, converged


@numba.njit(cache=True)
def self_feedback_tanh(drive, diag, x0):
    """Row-wise ``g[t] = tanh(drive[t] + diag * g[t-1])`` with ``g[-1] = x0``."""
    m, n = drive.shape
    out = np.empty((m, n))
    for i in range(m):
        prev = x0[i]
        d = diag[i]
        for t in range(n):
            prev = np.tanh(drive[i, t] + d * prev)
            out[i, t] = prev
    return out


def coordinate_descent(gram, xty, l1, l2=0.0, w0=None, active=None, tol=1e-6, max_iter=10_000):
    """Solve one elastic-net row problem given ``X'X`` and ``X'y``.

    Returns ``(w, n_iter, converged)``.  Converged means the last sweep moved
    no coefficient by ``tol`` or more and the KKT residual is at most
    ``tol``.  Inactive or zero-norm coordinates stay exactly zero.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    xty = np.ascontiguousarray(xty, dtype=np.float64)
    p = xty.shape[0]
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=np.float64)
    act = np.ones(p, dtype=np.bool_) if active is None else np.array(active, dtype=np.bool_)
    act &= np.diag(gram) + l2 > 0
    w[~act] = 0.0
    n_iter, converged = _cd_gram(gram, xty, w, float(l1), float(l2), act, float(tol), int(max_iter))
    return w, int(n_iter), bool(converged)


def kkt_violation(gram, xty, w, l1, l2=0.0, active=None) -> float:
    """Largest subgradient violation of ``w'Gw - 2b'w + l1|w|_1 + l2|w|^2``.

    Measured on the gradient scale ``2(b - Gw) - 2 l2 w``, as in the usual
    KKT statement for the unscaled objective.
    """
    grad = 2.0 * (xty - gram @ w) - 2.0 * l2 * w
    nz = w != 0
    v = np.where(nz, np.abs(grad - l1 * np.sign(w)), np.maximum(np.abs(grad) - l1, 0.0))
    if active is not None:
        v = np.where(active, v, 0.0)
    return float(v.max()) if v.size else 0.0


def _objective(gram, xty, w, l1, l2):
    return float(w @ gram @ w - 2.0 * xty @ w + l1 * np.abs(w).sum() + l2 * w @ w)


def polish_active_set(gram, xty, w, l1, l2=0.0, active=None, tol=1e-10, max_rounds=200):
    """Feature-sign search started from ``w``.

    Alternates an exact solve on the current support (signs fixed) with a
    discrete line search over the points where coefficients cross zero,
    then adds the worst KKT violator.  Returns ``(w_new, ok)`` where ``ok``
    means the KKT conditions hold to ``tol`` relative to ``max|b|``; the
    objective never increases, so a failed call still returns a usable
    iterate.
    """
    w = np.array(w, dtype=np.float64)
    act = np.ones(w.shape[0], dtype=bool) if active is None else np.asarray(active, dtype=bool)
    act = act & (np.diag(gram) + l2 > 0)
    w[~act] = 0.0
    scale = max(1.0, float(np.max(np.abs(xty))) if xty.size else 1.0)
    theta = np.sign(w)
    for _ in range(max_rounds):
        grad = 2.0 * (xty - gram @ w) - 2.0 * l2 * w
        nz = theta != 0
        if nz.any() and np.max(np.abs(grad[nz] - l1 * theta[nz])) > tol * scale:
            idx = np.flatnonzero(nz)
            a = gram[np.ix_(idx, idx)] + l2 * np.eye(idx.size)
            try:
                target = np.linalg.solve(a, xty[idx] - 0.5 * l1 * theta[idx])
            except np.linalg.LinAlgError:
                return w, False
            cur = w[idx]
            # candidate stops: the full step and every zero crossing on the way
            steps = [1.0]
            d = target - cur
            with np.errstate(divide="ignore", invalid="ignore"):
                t0 = -cur / d
            steps += [t for t in t0 if 0 < t < 1]
            best, best_f = None, np.inf
            for t in steps:
                trial = w.copy()
                trial[idx] = cur + t * d
                if t < 1:
                    trial[idx[np.abs(trial[idx]) <= 1e-15 * (1 + np.abs(cur))]] = 0.0
                # keep the sign pattern: coefficients may shrink to zero but not flip
                trial[idx] = np.where(np.sign(trial[idx]) == -theta[idx], 0.0, trial[idx])
                f = _objective(gram, xty, trial, l1, l2)
                if f < best_f:
                    best, best_f = trial, f
            w = best
            theta = np.sign(w)
            continue
        viol = np.where(act & ~nz, np.abs(grad) - l1, -np.inf)
        j = int(np.argmax(viol)) if viol.size else 0
        if not viol.size or viol[j] <= tol * scale:
            return w, True
        theta[j] = np.sign(grad[j])
    return w, kkt_violation(gram, xty, w, l1, l2, act) <= tol * scale
