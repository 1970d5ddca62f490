"""Brute-force reference solvers used to check the production code."""

import itertools

import numpy as np


def lasso_objective(w, u, t, c_l, l2=0.0):
    r = u @ w - t
    return float(r @ r + c_l * np.abs(w).sum() + l2 * (w @ w))


def dense_grid_lasso(u, t, c_l, l2=0.0, points=21, rounds=40):
    """Minimize the penalized objective by repeated zooming grid search.

    The objective is convex, so each round re-centres a ``points``-per-axis
    grid on the best point found and halves its half-width.
    """
    f = u.shape[1]
    center = np.zeros(f)
    # every minimizer lies inside the box bounded by the zero-point objective
    half = np.sqrt(float(t @ t) / max(c_l, 1e-12)) if c_l > 0 else 10.0
    half = min(half, 50.0)
    best = lasso_objective(center, u, t, c_l, l2)
    axis = np.linspace(-1.0, 1.0, points)
    masks = np.array(list(itertools.product((0, 1), repeat=f)), dtype=float)
    offsets = np.array(list(itertools.product(axis, repeat=f)))
    for _ in range(rounds):
        cand = center + half * offsets
        # zero is a kink: always offer exact zeros of each coordinate
        cand = np.vstack([cand, masks * center])
        r = cand @ u.T - t
        vals = (r * r).sum(axis=1) + c_l * np.abs(cand).sum(axis=1) + l2 * (cand * cand).sum(axis=1)
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, center = float(vals[k]), cand[k]
        half *= 0.5
    return center, best


def least_change(w, g, y):
    """``argmin ||V - W||_F  s.t.  V g = y`` via the dense KKT system.

    Unknowns are ``vec(V)`` (row-major) and one multiplier per output.
    """
    w = np.atleast_2d(w)
    L, m = w.shape
    n = L * m
    a = np.zeros((L, n))
    for q in range(L):
        a[q, q * m:(q + 1) * m] = g
    kkt = np.block([[2 * np.eye(n), a.T], [a, np.zeros((L, L))]])
    rhs = np.concatenate([2 * w.ravel(), np.asarray(y, dtype=float).ravel()])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n].reshape(L, m)


def constructive_residual(e, g, c):
    """Residual after adding ``g`` with weight ``<e_q, g> / (||g||^2 + c)`` per output."""
    e = np.atleast_2d(e)
    beta = (e @ g) / (g @ g + c)
    return e - beta[:, None] * g[None, :], beta
