"""Multistart local optimisation shared by the prox and dual solvers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

TIE_RTOL = 1e-12


def atom_rng(seed: int, k: int) -> np.random.Generator:
    """Independent stream per (seed, atom index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(k)]))


def starts(y: np.ndarray, count: int, seed: int, k: int, extra: Optional[np.ndarray] = None) -> np.ndarray:
    """``y`` itself, then ``count - 1`` Gaussian perturbations of scale 1 + |y|."""
    rng = atom_rng(seed, k)
    pts = [y]
    if count > 1:
        pts.extend(y + (1.0 + np.linalg.norm(y)) * rng.standard_normal((count - 1, y.size)))
    if extra is not None:
        pts.append(np.asarray(extra, dtype=float))
    return np.vstack(pts)


@dataclass
class LocalMin:
    x: np.ndarray
    value: float
    grad_norm: float
    success: bool


def _newton_polish(f, g, x, value, rounds: int = 3):
    """Newton steps with a central-difference Hessian, kept while the gradient shrinks."""
    for _ in range(rounds):
        xn, vn = _newton_step(f, g, x, value)
        if xn is x:
            break
        x, value = xn, vn
    return x, value


def _newton_step(f, g, x, value):
    d = x.size
    h = 1e-5 * (1.0 + np.linalg.norm(x))
    H = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        H[:, i] = (g(x + e) - g(x - e)) / (2.0 * h)
    H = 0.5 * (H + H.T)
    gx = g(x)
    try:
        step = np.linalg.solve(H, -gx)
    except np.linalg.LinAlgError:
        return x, value
    if not np.all(np.isfinite(step)):
        return x, value
    xn = x + step
    vn = f(xn)
    # near a minimum f is flat to rounding, so allow a rounding-level rise
    if vn <= value + 1e-14 * (1.0 + abs(value)) and np.linalg.norm(g(xn)) < np.linalg.norm(gx):
        return xn, vn
    return x, value


def multistart_minimize(
    f: Callable[[np.ndarray], float],
    g: Callable[[np.ndarray], np.ndarray],
    x0s: np.ndarray,
    gtol: float = 1e-11,
    diverge_below: float = -np.inf,
) -> LocalMin:
    """Best local minimum over the starts.

    Ties within ``TIE_RTOL`` relative in value go to the lexicographically
    largest point. A run whose value drops below ``diverge_below`` is
    returned at once (the objective is treated as unbounded below).
    """
    best: Optional[LocalMin] = None
    for x0 in x0s:
        res = minimize(f, x0, jac=g, method="BFGS", options={"gtol": gtol, "maxiter": 2000})
        x, val = np.asarray(res.x, dtype=float), float(res.fun)
        if not np.isfinite(val) or val < diverge_below:
            return LocalMin(x, -np.inf, np.inf, False)
        x, val = _newton_polish(f, g, x, val)
        gn = float(np.linalg.norm(g(x)))
        cand = LocalMin(x, val, gn, bool(res.success) or gn <= 1e-8)
        if best is None:
            best = cand
            continue
        scale = TIE_RTOL * (1.0 + abs(best.value))
        if val < best.value - scale:
            best = cand
        elif abs(val - best.value) <= scale and tuple(x) > tuple(best.x):
            best = cand
    return best
