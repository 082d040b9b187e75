"""Wasserstein proximal operator of a potential energy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._parallel import pmap
from ..errors import DescentFailure, ValidationError
from ..measures import DiscreteMeasure, canonicalize
from ..potentials import Potential
from .local import multistart_minimize, starts

FIRST_ORDER_TOL = 1e-8


@dataclass
class ProxResult:
    mu_star: DiscreteMeasure
    cost: float
    # per source atom: minimiser, value and first-order residual |grad V(x) + x - y|
    minimizers: np.ndarray
    values: np.ndarray
    first_order: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __iter__(self):
        return iter((self.mu_star, self.cost))

    def to_dict(self) -> dict:
        from ..serialization import measure_to_dict

        return {
            "mu_star": measure_to_dict(self.mu_star),
            "cost": float(self.cost),
            "minimizers": self.minimizers.tolist(),
            "values": self.values.tolist(),
            "first_order": self.first_order.tolist(),
            "failures": self.failures,
        }


def prox(V: Potential, mu_bar: DiscreteMeasure, multistart: int = 8, seed: int = 0, strict: bool = False) -> ProxResult:
    """argmin over mu of E_mu[V] + W2(mu, mu_bar)^2 / 2, solved atom by atom.

    Each source atom y moves to a minimiser of V(z) + |z - y|^2 / 2; equal
    values are resolved towards the lexicographically largest point.
    Atoms whose best point fails the first-order check are listed in
    ``failures`` (or raise :class:`DescentFailure` when ``strict``).
    """
    if multistart < 1:
        raise ValidationError(f"multistart must be >= 1, got {multistart}", field="multistart")

    def solve(k):
        y = mu_bar.points[k]

        def f(z):
            diff = z - y
            return V(z) + 0.5 * float(diff @ diff)

        def g(z):
            return V.grad(z) + (z - y)

        best = multistart_minimize(f, g, starts(y, multistart, seed, k))
        return best.x, best.value, float(np.linalg.norm(V.grad(best.x) + best.x - y))

    out = pmap(solve, range(mu_bar.n))
    X = np.vstack([o[0] for o in out])
    vals = np.array([o[1] for o in out])
    fo = np.array([o[2] for o in out])
    failures = [
        {"atom": int(k), "first_order": float(fo[k])} for k in range(mu_bar.n) if not fo[k] <= FIRST_ORDER_TOL
    ]
    if strict and failures:
        raise DescentFailure("first-order check failed", failures=failures)
    mu_star = canonicalize(DiscreteMeasure(X, mu_bar.weights))
    return ProxResult(mu_star, float(mu_bar.weights @ vals), X, vals, fo, failures)
