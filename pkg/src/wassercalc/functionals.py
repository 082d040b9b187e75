"""Functionals on discrete measures and one-element subgradients.

Each functional evaluates at a measure and returns subgradient candidates as
variations anchored there. Plan-dependent items (W2Squared, OTDiscrepancy)
produce one candidate per optimal plan vertex the transport module exposes;
everything else is map-induced and has a single candidate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import AnchorMismatch, LogOfZero, PlanRequired, ValidationError, WasserCalcError
from .measures import DiscreteMeasure, expected_value, potential_values, variance
from .potentials import Potential
from .tangent import Variation, apply, coupled_sum, from_plan, from_vector_field, scale
from .transport import CostFunction, optimal_vertices, solve_ot, sqeuclidean, w2

MAX_CANDIDATES = 64


@dataclass(frozen=True)
class Subgradient:
    """A subgradient element plus a note on how it was built."""

    variation: Variation
    note: str
    # plan vertex used by each plan-dependent leaf, in traversal order
    plan_ids: tuple = ()

    def to_dict(self) -> dict:
        return {"note": self.note, "plan_ids": list(self.plan_ids), "variation": self.variation.to_dict()}


def _gaussian_log_kernel(diff_sq: np.ndarray, d: int) -> np.ndarray:
    return -0.5 * d * np.log(2.0 * np.pi) - 0.5 * diff_sq


class Functional:
    """Base class; subclasses implement ``evaluate`` and ``_candidates``."""

    plan_valued = False

    def evaluate(self, mu: DiscreteMeasure) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def _candidates(self, mu: DiscreteMeasure, all_plans: bool) -> list[Subgradient]:  # pragma: no cover
        raise NotImplementedError

    def candidates(self, mu: DiscreteMeasure, all_plans: bool = True) -> list[Subgradient]:
        return self._candidates(mu, all_plans)[:MAX_CANDIDATES]

    def subgradient(self, mu: DiscreteMeasure) -> Subgradient:
        return self._candidates(mu, False)[0]

    def to_dict(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ExpectedValue(Functional):
    V: Potential

    def evaluate(self, mu):
        return expected_value(mu, self.V)

    def _candidates(self, mu, all_plans):
        return [Subgradient(from_vector_field(mu, self.V.grads(mu.points)), "grad V at atoms")]

    def to_dict(self):
        return {"type": "expected_value", "V": self.V.to_dict()}


@dataclass(frozen=True, eq=False)
class Variance(Functional):
    V: Potential

    def evaluate(self, mu):
        return variance(mu, self.V)

    def _candidates(self, mu, all_plans):
        vals = potential_values(mu, self.V)
        mean = mu.weights @ vals
        arrows = 2.0 * (vals - mean)[:, None] * self.V.grads(mu.points)
        return [Subgradient(from_vector_field(mu, arrows), "2 (V - E V) grad V at atoms")]

    def to_dict(self):
        return {"type": "variance", "V": self.V.to_dict()}


@dataclass(frozen=True, eq=False)
class MeanVariance(Functional):
    """sign * (E<theta, x> + rho/2 Var<theta, x>); sign -1 is the worst-case form."""

    theta: np.ndarray
    rho: float = 0.0
    sign: int = -1

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if not np.all(np.isfinite(theta)) or not np.isfinite(self.rho):
            raise ValidationError("mean-variance parameters must be finite", field="theta")
        if self.rho < 0:
            raise ValidationError(f"rho must be nonnegative, got {self.rho}", field="rho")
        if self.sign not in (1, -1):
            raise ValidationError(f"sign must be +1 or -1, got {self.sign}", field="sign")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rho", float(self.rho))

    def _proj(self, mu):
        if mu.dim != self.theta.size:
            raise ValidationError(f"theta has dim {self.theta.size}, measure has dim {mu.dim}", field="theta")
        return mu.points @ self.theta

    def evaluate(self, mu):
        t = self._proj(mu)
        m = mu.weights @ t
        var = max(float(mu.weights @ (t - m) ** 2), 0.0)
        return self.sign * (float(m) + 0.5 * self.rho * var)

    def _candidates(self, mu, all_plans):
        t = self._proj(mu)
        coef = self.sign * (1.0 + self.rho * (t - mu.weights @ t))
        return [Subgradient(from_vector_field(mu, coef[:, None] * self.theta), "affine-in-theta gradient")]

    def to_dict(self):
        return {"type": "mean_variance", "theta": self.theta.tolist(), "rho": self.rho, "sign": self.sign}


def _plan_list(mu, ref, cost, all_plans):
    try:
        if all_plans:
            search = optimal_vertices(mu, ref, cost)
            return search.plans, search.exhaustive
        return [solve_ot(mu, ref, cost)], False
    except WasserCalcError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise PlanRequired(f"no optimal plan available: {exc.message}", cause=exc.code) from exc


@dataclass(frozen=True, eq=False)
class W2Squared(Functional):
    ref: DiscreteMeasure
    scale: float = 0.5
    plan_valued = True

    def evaluate(self, mu):
        dist, _ = w2(mu, self.ref)
        return self.scale * dist * dist

    def _candidates(self, mu, all_plans):
        if mu.dim != self.ref.dim:
            raise ValidationError("measure and reference dimensions differ", field="ref")
        plans, exhaustive = _plan_list(mu, self.ref, sqeuclidean(), all_plans)
        out = []
        for p_id, plan in enumerate(plans):
            xi = scale(2.0 * self.scale, from_plan(mu, self.ref, plan, sign="negative"))
            note = f"2*scale*(x - y) over plan vertex {p_id} of {len(plans)}"
            if all_plans:
                note += " (vertex search exhaustive)" if exhaustive else " (vertex search partial)"
            out.append(Subgradient(xi, note, (p_id,)))
        return out

    def to_dict(self):
        from .serialization import measure_to_dict

        return {"type": "w2sq", "ref": measure_to_dict(self.ref), "scale": self.scale}


@dataclass(frozen=True, eq=False)
class OTDiscrepancy(Functional):
    ref: DiscreteMeasure
    cost: CostFunction = field(default_factory=sqeuclidean)
    plan_valued = True

    def evaluate(self, mu):
        return solve_ot(mu, self.ref, self.cost).value

    def _candidates(self, mu, all_plans):
        if self.cost.grad_x is None:
            raise ValidationError(f"cost {self.cost.name!r} has no x-gradient", field="cost")
        plans, exhaustive = _plan_list(mu, self.ref, self.cost, all_plans)
        out = []
        for p_id, plan in enumerate(plans):
            vec = np.array(
                [
                    np.asarray(self.cost.grad_x(mu.points[i], self.ref.points[j]), dtype=float).reshape(-1)
                    for i, j in zip(plan.rows, plan.cols)
                ]
            )
            xi = Variation(mu, plan.rows, vec, plan.mass)
            out.append(Subgradient(xi, f"grad_x c over plan vertex {p_id} of {len(plans)}", (p_id,)))
        return out

    def to_dict(self):
        from .serialization import measure_to_dict

        return {"type": "ot", "ref": measure_to_dict(self.ref), "cost": self.cost.name}


@dataclass(frozen=True, eq=False)
class Interaction(Functional):
    """scale * sum_{k,l} w_k w_l W(x_k - x_l)."""

    W: Potential
    scale: float = 0.5

    def _diffs(self, mu):
        X = mu.points
        return (X[:, None, :] - X[None, :, :]).reshape(-1, mu.dim)

    def evaluate(self, mu):
        vals = self.W.values(self._diffs(mu)).reshape(mu.n, mu.n)
        return float(self.scale * mu.weights @ vals @ mu.weights)

    def _candidates(self, mu, all_plans):
        n, d = mu.n, mu.dim
        G = self.W.grads(self._diffs(mu)).reshape(n, n, d)
        # d/dx_k of the double sum, per unit mass at x_k; W need not be even
        arrows = self.scale * (
            np.einsum("l,kld->kd", mu.weights, G) - np.einsum("l,lkd->kd", mu.weights, G)
        )
        return [Subgradient(from_vector_field(mu, arrows), "discrete convolution with grad W")]

    def to_dict(self):
        return {"type": "interaction", "W": self.W.to_dict(), "scale": self.scale}


@dataclass(frozen=True, eq=False)
class GaussianMixtureNLL(Functional):
    """-sum_i log sum_k w_k phi(x_k - X_i) with the unit-covariance Gaussian phi."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        if data.size == 0:
            raise ValidationError("GMM data is empty", field="data")
        if not np.all(np.isfinite(data)):
            raise ValidationError("GMM data has non-finite entries", field="data")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def _log_terms(self, mu):
        if mu.dim != self.data.shape[1]:
            raise ValidationError("data and measure dimensions differ", field="data")
        diff = mu.points[:, None, :] - self.data[None, :, :]
        logk = _gaussian_log_kernel(np.einsum("kid,kid->ki", diff, diff), mu.dim)
        logp = logsumexp(logk, axis=0, b=mu.weights[:, None])
        if not np.all(np.isfinite(logp)):
            bad = int(np.flatnonzero(~np.isfinite(logp))[0])
            raise LogOfZero(f"mixture density vanishes at data point {bad}", index=bad)
        return diff, logk, logp

    def evaluate(self, mu):
        _, _, logp = self._log_terms(mu)
        return float(-logp.sum())

    def _candidates(self, mu, all_plans):
        diff, logk, logp = self._log_terms(mu)
        ratio = np.exp(logk - logp[None, :])  # phi(x_k - X_i) / p_i
        arrows = np.einsum("ki,kid->kd", ratio, diff)
        return [Subgradient(from_vector_field(mu, arrows), "mixture responsibility field")]

    def to_dict(self):
        return {"type": "gmm_nll", "data": self.data.tolist()}


def _combine(coefs: Sequence[float], parts: Sequence[Variation]) -> Variation:
    out = scale(coefs[0], parts[0])
    for c, xi in zip(coefs[1:], parts[1:]):
        out = coupled_sum(out, scale(c, xi))
    return out


def _product_candidates(children: Sequence[Functional], mu, all_plans):
    lists = [J._candidates(mu, all_plans) for J in children]
    combos = itertools.islice(itertools.product(*lists), MAX_CANDIDATES)
    return list(combos)


@dataclass(frozen=True, eq=False)
class LinearCombination(Functional):
    terms: tuple

    def __post_init__(self):
        terms = tuple((float(c), J) for c, J in self.terms)
        if not terms:
            raise ValidationError("linear combination needs at least one term", field="terms")
        for c, _ in terms:
            if not np.isfinite(c) or c < 0:
                raise ValidationError(f"coefficients must be finite and nonnegative, got {c}", field="terms")
        object.__setattr__(self, "terms", terms)

    @property
    def plan_valued(self):
        return any(J.plan_valued for _, J in self.terms)

    def evaluate(self, mu):
        return float(sum(c * J.evaluate(mu) for c, J in self.terms))

    def _candidates(self, mu, all_plans):
        coefs = [c for c, _ in self.terms]
        out = []
        for combo in _product_candidates([J for _, J in self.terms], mu, all_plans):
            xi = _combine(coefs, [s.variation for s in combo])
            ids = sum((s.plan_ids for s in combo), ())
            note = "maximally aligned sum of: " + "; ".join(s.note for s in combo)
            out.append(Subgradient(xi, note, ids))
        return out

    def to_dict(self):
        return {"type": "linear_combination", "terms": [{"coef": c, "J": J.to_dict()} for c, J in self.terms]}


@dataclass(frozen=True, eq=False)
class Composition(Functional):
    """g(J_1(mu), ..., J_m(mu)) for a C^1 outer function g with gradient grad_g."""

    g: Callable[[np.ndarray], float]
    grad_g: Callable[[np.ndarray], np.ndarray]
    inner: tuple
    name: str = "composition"

    def __post_init__(self):
        object.__setattr__(self, "inner", tuple(self.inner))
        if not self.inner:
            raise ValidationError("composition needs at least one inner functional", field="inner")

    @property
    def plan_valued(self):
        return any(J.plan_valued for J in self.inner)

    def _inner_values(self, mu):
        return np.array([J.evaluate(mu) for J in self.inner])

    def evaluate(self, mu):
        return float(self.g(self._inner_values(mu)))

    def _candidates(self, mu, all_plans):
        coefs = np.asarray(self.grad_g(self._inner_values(mu)), dtype=float).reshape(-1)
        if coefs.size != len(self.inner) or not np.all(np.isfinite(coefs)):
            raise ValidationError("grad_g must return one finite partial per inner functional", field="g")
        out = []
        for combo in _product_candidates(self.inner, mu, all_plans):
            for c, s in zip(coefs, combo):
                if c < 0 and not s.variation.is_map_induced():
                    raise ValidationError(
                        "negative partial of g applied to a plan-valued subgradient", field="g"
                    )
            xi = _combine(list(coefs), [s.variation for s in combo])
            ids = sum((s.plan_ids for s in combo), ())
            out.append(Subgradient(xi, f"chain rule through {self.name}", ids))
        return out

    def to_dict(self):
        raise ValidationError("compositions with host callables are not serialisable", field="g")


# module-level entry points


def evaluate(J: Functional, mu: DiscreteMeasure) -> float:
    return J.evaluate(mu)


def subgradient_element(J: Functional, mu: DiscreteMeasure) -> Subgradient:
    """One element of the subgradient at ``mu`` (the first plan vertex for plan-valued items)."""
    return J.subgradient(mu)


def subgradient_candidates(J: Functional, mu: DiscreteMeasure, all_plans: bool = True) -> list[Subgradient]:
    """Candidates over every enumerated optimal plan vertex (one for smooth items)."""
    return J.candidates(mu, all_plans)


def fd_directional(J: Functional, mu: DiscreteMeasure, xi: Variation, eps: float) -> float:
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}", field="eps")
    if not (xi.anchor is mu or xi.anchor.same_as(mu)):
        raise AnchorMismatch("direction is not anchored at the evaluation measure")
    return (J.evaluate(apply(xi, eps)) - J.evaluate(mu)) / eps


def mean_variance_risk(V: Potential, rho: float) -> Composition:
    """E[V] + rho Var[V] as a composition (used by the nonlinear DRO solver)."""
    return Composition(
        lambda t: t[0] + rho * t[1],
        lambda t: np.array([1.0, rho]),
        (ExpectedValue(V), Variance(V)),
        name="E + rho Var",
    )
