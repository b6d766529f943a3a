"""Quasi-Newton minimization tolerant to infeasible (infinite) trial points."""
from dataclasses import dataclass

import numpy as np


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    nit: int
    nfev: int
    status: str


def bfgs(fun, x0, max_iter=500, grad_tol=1e-7, c1=1e-4, shrink=0.5,
         max_backtracks=40, max_step=1.0, H0=None):
    """BFGS with Armijo backtracking.

    `fun(x)` returns (value, gradient); non-finite values reject the trial
    point. Stops when ||g||_inf <= grad_tol * (1 + |f|) or after max_iter.
    `max_step` caps the Euclidean length of each initial trial step; `H0`
    is an optional initial inverse-Hessian approximation (identity with
    automatic scaling otherwise).
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    nfev = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return OptimizeResult(x, f, g, 0, nfev, "infeasible start")
    n = x.size
    H = np.eye(n) if H0 is None else np.array(H0, dtype=float)
    first = H0 is None
    status = "max_iter"
    it = 0
    for it in range(max_iter):
        if np.max(np.abs(g), initial=0.0) <= grad_tol * (1.0 + abs(f)):
            status = "converged"
            break
        p = -H @ g
        slope = g @ p
        if not slope < 0:
            H = np.eye(n) if H0 is None else np.array(H0, dtype=float)
            p = -g
            slope = g @ p
        plen = np.linalg.norm(p)
        step = min(1.0, max_step / plen) if plen > 0 else 1.0
        accepted = False
        for _ in range(max_backtracks):
            xn = x + step * p
            fn, gn = fun(xn)
            nfev += 1
            if np.isfinite(fn) and np.all(np.isfinite(gn)) and fn <= f + c1 * step * slope:
                accepted = True
                break
            step *= shrink
        if not accepted:
            status = "line search failed"
            break
        s = xn - x
        y = gn - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first:
                H = np.eye(n) * (sy / (y @ y))
                first = False
            rho = 1.0 / sy
            Hy = H @ y
            H = (H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                 + (rho * rho * (y @ Hy) + rho) * np.outer(s, s))
        x, f, g = xn, fn, gn
    else:
        it = max_iter
    if status == "max_iter" and np.max(np.abs(g), initial=0.0) <= grad_tol * (1.0 + abs(f)):
        status = "converged"
    return OptimizeResult(x, f, g, it, nfev, status)
