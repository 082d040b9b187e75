"""Constraint sets, activity classification and normal-cone elements."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InfeasiblePoint, ValidationError, ZeroSubgradientQualification
from .functionals import Functional
from .measures import DiscreteMeasure, second_moment
from .tangent import Variation, from_plan, from_vector_field, local_norm, local_zero, scale
from .transport import optimal_vertices, solve_ot, w2

INTERIOR = "interior"
BOUNDARY = "boundary"
INFEASIBLE = "infeasible"
REL_TOL = 1e-7
ZERO_SUBGRAD_TOL = 1e-12


@dataclass(frozen=True)
class Activity:
    status: str
    slack: float
    tol: float
    # the quantity compared against tol (differs from slack for the moment ball)
    margin: float

    def to_dict(self) -> dict:
        return {"status": self.status, "slack": _num(self.slack), "tol": self.tol}


def _num(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _classify(margin: float, slack: float, tol: float) -> Activity:
    if margin > tol:
        status = INTERIOR
    elif margin >= -tol:
        status = BOUNDARY
    else:
        status = INFEASIBLE
    return Activity(status, slack, tol, margin)


@dataclass(frozen=True)
class NormalCandidate:
    """Normal element at multiplier ``lam`` together with its unit-multiplier direction."""

    variation: Variation
    direction: Variation
    lam: float
    note: str
    plan_id: int = 0


class Constraint:
    radius = 0.0

    def activity(self, mu: DiscreteMeasure, tol: float | None = None) -> Activity:  # pragma: no cover
        raise NotImplementedError

    def directions(self, mu: DiscreteMeasure, all_plans: bool) -> list[tuple[Variation, str]]:  # pragma: no cover
        raise NotImplementedError

    def default_tol(self) -> float:
        return REL_TOL * (1.0 + abs(self.radius))


@dataclass(frozen=True, eq=False)
class FullSpace(Constraint):
    def activity(self, mu, tol=None):
        return Activity(INTERIOR, math.inf, self.default_tol(), math.inf)

    def directions(self, mu, all_plans):
        return [(local_zero(mu), "full space")]

    def to_dict(self):
        return {"type": "full"}


@dataclass(frozen=True, eq=False)
class WassersteinBall(Constraint):
    ref: DiscreteMeasure
    eps: float

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValidationError(f"ball radius must be finite and positive, got {self.eps}", field="eps")

    @property
    def radius(self):
        return self.eps

    def activity(self, mu, tol=None):
        tol = self.default_tol() if tol is None else tol
        dist, _ = w2(mu, self.ref)
        slack = self.eps - dist
        return _classify(slack, slack, tol)

    def directions(self, mu, all_plans):
        if all_plans:
            search = optimal_vertices(mu, self.ref)
            plans, tag = search.plans, "exhaustive" if search.exhaustive else "partial"
        else:
            plans, tag = [solve_ot(mu, self.ref)], "single"
        return [
            (scale(2.0, from_plan(mu, self.ref, p, sign="negative")), f"2(x - y) over plan vertex {i} ({tag})")
            for i, p in enumerate(plans)
        ]

    def to_dict(self):
        from .serialization import measure_to_dict

        return {"type": "w2ball", "ref": measure_to_dict(self.ref), "eps": self.eps}


@dataclass(frozen=True, eq=False)
class SecondMomentBall(Constraint):
    """{mu : E||x||^2 <= eps^2}, the Wasserstein ball around a Dirac at the origin."""

    eps: float

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValidationError(f"ball radius must be finite and positive, got {self.eps}", field="eps")

    @property
    def radius(self):
        return self.eps

    def activity(self, mu, tol=None):
        tol = self.default_tol() if tol is None else tol
        m2 = second_moment(mu)
        # classify on the distance scale so results agree with the Dirac-centred ball
        return _classify(self.eps - math.sqrt(m2), self.eps**2 - m2, tol)

    def directions(self, mu, all_plans):
        return [(from_vector_field(mu, 2.0 * mu.points), "2x at atoms")]

    def to_dict(self):
        return {"type": "moment2", "eps": self.eps}


@dataclass(frozen=True, eq=False)
class Sublevel(Constraint):
    J: Functional
    c: float

    @property
    def radius(self):
        return self.c

    def activity(self, mu, tol=None):
        tol = self.default_tol() if tol is None else tol
        slack = self.c - self.J.evaluate(mu)
        return _classify(slack, slack, tol)

    def directions(self, mu, all_plans):
        out = []
        for s in self.J.candidates(mu, all_plans) if all_plans else [self.J.subgradient(mu)]:
            if local_norm(s.variation) <= ZERO_SUBGRAD_TOL:
                raise ZeroSubgradientQualification(
                    "subgradient vanishes on the boundary of the sublevel set", note=s.note
                )
            out.append((s.variation, "subgradient: " + s.note))
        return out

    def to_dict(self):
        return {"type": "sublevel", "J": self.J.to_dict(), "c": self.c}


def activity(C: Constraint, mu: DiscreteMeasure, tol: float | None = None) -> Activity:
    return C.activity(mu, tol)


def normal_candidates(C: Constraint, mu: DiscreteMeasure, lam: float, all_plans: bool = True) -> list[NormalCandidate]:
    """Normal elements at ``lam`` over every available plan vertex.

    Interior points (and the full space) give the local zero with the
    multiplier coerced to 0.
    """
    if not (math.isfinite(lam) and lam >= 0):
        raise ValidationError(f"multiplier must be finite and nonnegative, got {lam}", field="lambda")
    act = C.activity(mu)
    if act.status == INFEASIBLE:
        raise InfeasiblePoint(f"measure violates the constraint (slack {act.slack:.6g})", slack=act.slack)
    if act.status == INTERIOR:
        z = local_zero(mu)
        return [NormalCandidate(z, z, 0.0, "interior: multiplier coerced to 0")]
    return [
        NormalCandidate(scale(lam, d), d, float(lam), note, i)
        for i, (d, note) in enumerate(C.directions(mu, all_plans))
    ]


def normal_element(C: Constraint, mu: DiscreteMeasure, lam: float) -> Variation:
    """One normal element (first plan vertex); see :func:`normal_candidates` for notes."""
    return normal_candidates(C, mu, lam, all_plans=False)[0].variation
