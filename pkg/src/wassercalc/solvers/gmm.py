"""Unit-covariance Gaussian mixture fitting over atom locations and weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from ..errors import DegenerateInit, ValidationError
from ..functionals import GaussianMixtureNLL
from ..measures import MERGE_TOL, DiscreteMeasure, canonicalize
from ..tangent import local_norm

ARMIJO_C = 1e-4


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _distinct_count(data: np.ndarray) -> int:
    return canonicalize(DiscreteMeasure(data, np.full(data.shape[0], 1.0 / data.shape[0]))).n


@dataclass
class GmmFit:
    mu_star: DiscreteMeasure
    nll: float
    residual: float
    iterations: int
    converged: bool
    # one entry per accepted step: (iteration, nll, residual, step size)
    history: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.mu_star, self.nll, self.residual))

    def to_dict(self) -> dict:
        from ..serialization import measure_to_dict

        return {
            "mu_star": measure_to_dict(self.mu_star),
            "nll": self.nll,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "history": [list(h) for h in self.history],
        }


class _Objective:
    """Mean NLL with gradients in atoms (per unit mass) and weights."""

    def __init__(self, data: np.ndarray):
        self.data = data
        self.N, self.d = data.shape
        self.const = -0.5 * self.d * np.log(2.0 * np.pi)

    def _terms(self, X, w):
        diff = X[:, None, :] - self.data[None, :, :]
        with np.errstate(divide="ignore"):
            logk = self.const - 0.5 * np.einsum("kid,kid->ki", diff, diff)
            logp = logsumexp(logk + np.log(w)[:, None], axis=0)
        return diff, logk, logp

    def value(self, X, w) -> float:
        _, _, logp = self._terms(X, w)
        return float(-logp.mean())

    def grads(self, X, w):
        diff, logk, logp = self._terms(X, w)
        ratio = np.exp(logk - logp[None, :])  # phi_ki / p_i
        atom = np.einsum("ki,kid->kd", ratio, diff) / self.N  # per unit mass
        weight = -ratio.sum(axis=1) / self.N
        return atom, weight


def _residual(data, X, w) -> float:
    keep = w > 0
    mu = DiscreteMeasure(X[keep], w[keep] / w[keep].sum())
    return local_norm(GaussianMixtureNLL(data).subgradient(mu).variation)


def fit_gaussian_mixture(
    data,
    m: int,
    seed: int = 0,
    max_iter: int = 5000,
    tol: float = 1e-10,
) -> GmmFit:
    """Projected-gradient descent on the NLL from a k-means++ start.

    Atoms move along the per-unit-mass NLL gradient (the Wasserstein
    gradient); weights take a projected Euclidean step. Both share one step
    size chosen by Armijo backtracking on the NLL.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    if data.size == 0:
        raise ValidationError("data is empty", field="data")
    if not np.all(np.isfinite(data)):
        raise ValidationError("data has non-finite entries", field="data")
    if m < 1:
        raise ValidationError(f"component count must be >= 1, got {m}", field="m")
    if m > _distinct_count(data):
        raise DegenerateInit(f"{m} components but only {_distinct_count(data)} distinct data points", m=m)

    rs = np.random.RandomState(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).generate_state(1)[0])
    X, _ = kmeans_plusplus(data, n_clusters=m, random_state=rs)
    X = np.asarray(X, dtype=float)
    w = np.full(m, 1.0 / m)
    obj = _Objective(data)
    f = obj.value(X, w)
    step = 1.0
    history = [(0, f * obj.N, _residual(data, X, w), 0.0)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gX, gw = obj.grads(X, w)
        # directional derivative of the mean NLL along the (preconditioned) step
        while True:
            Xn = X - step * gX
            wn = project_simplex(w - step * gw) if m > 1 else w
            dX, dw = Xn - X, wn - w
            slope = float(np.sum(w[:, None] * gX * dX) + gw @ dw)
            fn = obj.value(Xn, wn)
            if np.isfinite(fn) and fn <= f + ARMIJO_C * slope:
                break
            step *= 0.5
            if step < 1e-16:
                break
        moved = max(np.abs(dX).max(), np.abs(dw).max())
        if step < 1e-16 or not np.isfinite(fn):
            converged = True
            break
        decrease = f - fn
        X, w, f = Xn, wn, fn
        history.append((it, f * obj.N, _residual(data, X, w), step))
        if moved <= MERGE_TOL * 1e-2 or decrease <= tol * max(1.0, abs(f)) * 1e-3:
            converged = True
            break
        step = min(step * 2.0, 1e3)

    keep = w > 0
    mu_star = canonicalize(DiscreteMeasure(X[keep], w[keep] / w[keep].sum()))
    J = GaussianMixtureNLL(data)
    return GmmFit(mu_star, J.evaluate(mu_star), _residual(data, X, w), it, converged, history)
