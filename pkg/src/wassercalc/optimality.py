"""Stationarity residuals: Fermat's rule and the KKT condition with one constraint.

A residual is the smallest local norm of a coupled sum of a subgradient
candidate and a normal candidate, minimised over the multiplier and the
gluing. The search is over the finitely many plan vertices exposed by the
transport module, so a "NotStationary" verdict is relative to that set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constraints import INFEASIBLE, INTERIOR, Activity, Constraint, FullSpace
from .errors import InfeasiblePoint, QualificationFailure, ValidationError, ZeroSubgradientQualification
from .functionals import Functional
from .measures import DiscreteMeasure
from .tangent import GluedCoupling, Variation, local_norm, min_sum_norm, scale

STATIONARY = "StationaryWithin"
NOT_STATIONARY = "NotStationary"
REL_TOL = 1e-6
GRID_POINTS = 64
LAMBDA_TOL = 1e-8
ASSUMPTIONS = "constraint qualification and SNC of the feasible set are assumed, not checked"


@dataclass
class StationarityReport:
    residual: float
    lam: float
    activity: Activity
    verdict: str
    tol: float
    plan_id: dict = field(default_factory=dict)
    coupling: Optional[GluedCoupling] = None
    method: str = "fermat"
    candidates_searched: int = 1
    notes: list = field(default_factory=list)

    @property
    def stationary(self) -> bool:
        return self.verdict == STATIONARY

    def to_dict(self) -> dict:
        out = {
            "residual": self.residual,
            "lambda": self.lam,
            "activity": self.activity.to_dict(),
            "verdict": self.verdict,
            "tol": self.tol,
            "plan_id": self.plan_id,
            "method": self.method,
            "candidates_searched": self.candidates_searched,
            "notes": list(self.notes),
        }
        if self.verdict == NOT_STATIONARY:
            out["lower_bound"] = self.residual
        out["coupling"] = None if self.coupling is None else self.coupling.to_dict()
        return out


def _verdict(residual: float, g_norm: float, tol: Optional[float]) -> tuple[str, float]:
    tol = REL_TOL * (1.0 + g_norm) if tol is None else float(tol)
    return (STATIONARY if residual <= tol else NOT_STATIONARY), tol


def fermat_residual(
    J: Functional,
    mu: DiscreteMeasure,
    tol: Optional[float] = None,
    all_plans: bool = True,
    max_candidates: Optional[int] = None,
    activity: Optional[Activity] = None,
) -> StationarityReport:
    """Minimal local norm over subgradient candidates (lowest index wins ties)."""
    cands = J.candidates(mu, all_plans)
    if max_candidates is not None:
        cands = cands[: max(1, max_candidates)]
    norms = [local_norm(s.variation) for s in cands]
    best = int(np.argmin(norms))
    residual = float(norms[best])
    verdict, tol = _verdict(residual, residual, tol)
    act = activity or FullSpace().activity(mu)
    notes = [cands[best].note]
    if verdict == NOT_STATIONARY:
        notes.append(f"lower bound over {len(cands)} searched subgradient candidate(s)")
    return StationarityReport(
        residual=residual,
        lam=0.0,
        activity=act,
        verdict=verdict,
        tol=tol,
        plan_id={"subgradient": best, "plan_ids": list(cands[best].plan_ids)},
        coupling=None,
        method="fermat",
        candidates_searched=len(cands),
        notes=notes,
    )


def _paired(g: Variation, u: Variation):
    """Arrow pairs of the gluing when it is forced (either side map-induced)."""
    _, alpha = min_sum_norm(g, u)
    return g.vec[alpha.a], u.vec[alpha.b], alpha.mass


def _closed_form_lambda(G: np.ndarray, U: np.ndarray, M: np.ndarray) -> float:
    # residual^2(lam) = sum M |G + lam U|^2 = a lam^2 + b lam + c
    a = float(M @ np.einsum("ij,ij->i", U, U))
    b = 2.0 * float(M @ np.einsum("ij,ij->i", G, U))
    if a <= 0.0:
        return 0.0
    return max(0.0, -b / (2.0 * a))


def _golden(f, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f(d)
    return c if fc <= fd else d


def _golden_lambda(g: Variation, u: Variation) -> float:
    u_norm = local_norm(u)
    if u_norm == 0.0:
        return 0.0
    lam_max = 10.0 * (1.0 + local_norm(g)) / u_norm

    def f(lam):
        return min_sum_norm(g, scale(lam, u))[0]

    grid = np.linspace(0.0, lam_max, GRID_POINTS)
    vals = [f(x) for x in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
    lam = _golden(f, lo, hi, LAMBDA_TOL)
    best = min([(vals[i], grid[i]), (f(lam), lam)])
    # polish: the gluing at the best multiplier is fixed, so the quadratic is exact for it
    _, alpha = min_sum_norm(g, scale(best[1], u))
    polished = _closed_form_lambda(g.vec[alpha.a], u.vec[alpha.b], alpha.mass)
    fp = f(polished)
    return polished if fp < best[0] else float(best[1])


def kkt_residual(
    J: Functional,
    C: Constraint,
    mu: DiscreteMeasure,
    tol: Optional[float] = None,
    method: str = "auto",
    all_plans: bool = True,
) -> StationarityReport:
    """KKT residual of J over C at mu.

    ``method`` is "auto" (closed form whenever the gluing is forced, i.e. one
    side is map-induced), "closed" or "golden".
    """
    if method not in ("auto", "closed", "golden"):
        raise ValidationError(f"unknown method {method!r}", field="method")
    act = C.activity(mu)
    if act.status == INFEASIBLE:
        raise InfeasiblePoint(f"measure violates the constraint (slack {act.slack:.6g})", slack=act.slack)
    if act.status == INTERIOR:
        rep = fermat_residual(J, mu, tol=tol, all_plans=all_plans, activity=act)
        rep.notes.append("interior point: multiplier fixed at 0")
        return rep

    try:
        normals = C.directions(mu, all_plans)
    except ZeroSubgradientQualification as exc:
        raise QualificationFailure(exc.message, **exc.details) from exc
    subgrads = J.candidates(mu, all_plans)

    best = None
    used_golden = False
    for i, s in enumerate(subgrads):
        g = s.variation
        for j, (u, note) in enumerate(normals):
            forced = g.is_map_induced() or u.is_map_induced()
            if method == "closed" and not forced:
                raise ValidationError("closed form needs a map-induced subgradient or normal", field="method")
            if method == "golden" or not forced:
                lam = _golden_lambda(g, u)
                used_golden = True
            else:
                lam = _closed_form_lambda(*_paired(g, u))
            res, alpha = min_sum_norm(g, scale(lam, u))
            if best is None or res < best[0]:
                best = (res, lam, i, j, alpha, local_norm(g), s.note, note)

    res, lam, i, j, alpha, g_norm, s_note, n_note = best
    verdict, tol = _verdict(res, g_norm, tol)
    notes = [s_note, "normal: " + n_note, ASSUMPTIONS]
    if verdict == NOT_STATIONARY:
        notes.append(
            f"lower bound over {len(subgrads)} subgradient x {len(normals)} normal candidate(s)"
        )
    return StationarityReport(
        residual=float(res),
        lam=float(lam),
        activity=act,
        verdict=verdict,
        tol=tol,
        plan_id={"subgradient": i, "normal": j, "plan_ids": list(subgrads[i].plan_ids)},
        coupling=alpha,
        method="golden" if used_golden else "closed",
        candidates_searched=len(subgrads) * len(normals),
        notes=notes,
    )
