"""Box-constrained derivative-free polishing used by the surrogate searches."""

from __future__ import annotations

from typing import Callable

import numpy as np


def compass_search(
    fun: Callable[[np.ndarray], np.ndarray],
    u0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    step: float,
    tol: float = 1e-6,
    max_iter: int = 5000,
    f0: float | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize a batched function by coordinate moves inside a box.

    ``fun`` maps an ``(n, d)`` array of points to ``n`` values. At every
    iteration the 2d coordinate neighbours at distance ``step`` are evaluated
    together; the best strictly improving one is taken, otherwise the step is
    halved. Stops once the step drops below ``tol``.
    """
    u = np.clip(np.array(u0, dtype=float), lower, upper)
    d = u.size
    fu = float(fun(u[None, :])[0]) if f0 is None else float(f0)
    eye = np.eye(d)
    for _ in range(max_iter):
        if step < tol:
            break
        trial = np.concatenate([u + step * eye, u - step * eye])
        trial = np.clip(trial, lower, upper)
        vals = fun(trial)
        k = int(np.argmin(vals))
        if vals[k] < fu:
            u, fu = trial[k], float(vals[k])
        else:
            step *= 0.5
    return u, fu
