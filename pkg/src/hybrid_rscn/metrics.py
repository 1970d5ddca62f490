"""Error metrics."""

import numpy as np

__all__ = ["nrmse", "UndefinedVarianceError"]


class UndefinedVarianceError(ValueError):
    """Target has zero variance, so NRMSE is undefined."""


def nrmse(y, t) -> float:
    """Root mean square error over the population std of ``t``.

    Rows are outputs; for several outputs the per-output values are averaged.
    A predictor stuck at ``mean(t)`` scores exactly 1.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    t = np.atleast_2d(np.asarray(t, dtype=np.float64))
    if y.shape != t.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {t.shape}")
    if t.shape[1] == 0:
        raise ValueError("empty series")
    var = t.var(axis=1)
    if np.any(var <= 0):
        raise UndefinedVarianceError("constant target")
    return float(np.mean(np.sqrt(np.mean((y - t) ** 2, axis=1) / var)))
