"""Variations (tangent elements) anchored at a discrete measure.

A variation is stored as a flat list of arrows ``(atom, vector, mass)``; the
arrows at anchor atom k carry total mass equal to the anchor weight of k.
Gluings of two variations factorise over anchor atoms, so inner products,
distances and minimal sums reduce to one small assignment LP per atom.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AnchorMismatch, CouplingMarginalMismatch, MarginalMismatch, ValidationError
from .measures import DiscreteMeasure, canonicalize
from .transport import TransportPlan, network_simplex, w2

ARROW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Variation:
    anchor: DiscreteMeasure
    atom: np.ndarray  # (N,) anchor index of each arrow
    vec: np.ndarray  # (N, d)
    mass: np.ndarray  # (N,)

    def __post_init__(self) -> None:
        atom = np.asarray(self.atom, dtype=np.int64).reshape(-1)
        vec = np.asarray(self.vec, dtype=float)
        if vec.ndim == 1:
            vec = vec.reshape(atom.size, -1)
        mass = np.asarray(self.mass, dtype=float).reshape(-1)
        if not (atom.size == vec.shape[0] == mass.size):
            raise ValidationError("arrow arrays have inconsistent lengths", field="arrows")
        if vec.shape[1] != self.anchor.dim:
            raise ValidationError(
                f"arrow dim {vec.shape[1]} differs from anchor dim {self.anchor.dim}", field="arrows"
            )
        if not (np.all(np.isfinite(vec)) and np.all(np.isfinite(mass))):
            raise ValidationError("non-finite arrow entry", field="arrows")
        if np.any(mass <= 0):
            raise ValidationError("arrow masses must be positive", field="arrows")
        if atom.size and (atom.min() < 0 or atom.max() >= self.anchor.n):
            raise ValidationError("arrow anchored at a non-existent atom", field="arrows")
        sums = np.bincount(atom, weights=mass, minlength=self.anchor.n)
        err = np.abs(sums - self.anchor.weights).max()
        if err > ARROW_TOL:
            raise MarginalMismatch(
                f"arrow masses do not reproduce the anchor weights (error {err:.3g})",
                error=float(err),
            )
        for name, arr in (("atom", atom), ("vec", vec), ("mass", mass)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.anchor.dim

    @property
    def arrows(self) -> list[tuple[int, np.ndarray, float]]:
        return [(int(k), v, float(w)) for k, v, w in zip(self.atom, self.vec, self.mass)]

    def is_map_induced(self) -> bool:
        """One arrow per anchor atom (the variation is (id, f)#anchor)."""
        return self.atom.size == self.anchor.n and np.array_equal(np.sort(self.atom), np.arange(self.anchor.n))

    def arrows_at(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.atom == k)

    def to_dict(self) -> dict:
        from .serialization import measure_to_dict

        return {
            "anchor": measure_to_dict(self.anchor),
            "arrows": [
                {"k": int(k), "v": [float(x) for x in v], "mass": float(w)}
                for k, v, w in zip(self.atom, self.vec, self.mass)
            ],
        }


@dataclass(frozen=True, eq=False)
class GluedCoupling:
    """Three-way coupling of two variations along their common anchor.

    ``a`` and ``b`` index into ``left`` and ``right``'s arrow lists.
    """

    left: Variation
    right: Variation
    atom: np.ndarray
    a: np.ndarray
    b: np.ndarray
    mass: np.ndarray

    def check(self, tol: float = ARROW_TOL) -> None:
        la = np.bincount(self.a, weights=self.mass, minlength=self.left.mass.size)
        rb = np.bincount(self.b, weights=self.mass, minlength=self.right.mass.size)
        if np.abs(la - self.left.mass).max() > tol or np.abs(rb - self.right.mass).max() > tol:
            raise CouplingMarginalMismatch("coupling does not reproduce the arrow masses")
        if np.any(self.left.atom[self.a] != self.atom) or np.any(self.right.atom[self.b] != self.atom):
            raise CouplingMarginalMismatch("coupling pairs arrows anchored at different atoms")

    def to_dict(self) -> dict:
        return {
            "entries": [
                [int(k), int(i), int(j), float(w)]
                for k, i, j, w in zip(self.atom, self.a, self.b, self.mass)
            ]
        }


def variation(anchor: DiscreteMeasure, arrows: Iterable[tuple[int, Sequence[float], float]]) -> Variation:
    arrows = list(arrows)
    if not arrows:
        raise ValidationError("variation needs at least one arrow", field="arrows")
    atom = [int(k) for k, _, _ in arrows]
    vec = np.array([np.atleast_1d(np.asarray(v, dtype=float)) for _, v, _ in arrows])
    mass = [float(w) for _, _, w in arrows]
    return Variation(anchor, atom, vec, mass)


def from_vector_field(anchor: DiscreteMeasure, vectors) -> Variation:
    """Map-induced variation (id, f)#anchor from one vector per atom."""
    vec = np.asarray(vectors, dtype=float).reshape(anchor.n, anchor.dim)
    return Variation(anchor, np.arange(anchor.n), vec, anchor.weights.copy())


def local_zero(anchor: DiscreteMeasure) -> Variation:
    return from_vector_field(anchor, np.zeros((anchor.n, anchor.dim)))


def local_norm(xi: Variation) -> float:
    return float(np.sqrt(xi.mass @ np.einsum("ij,ij->i", xi.vec, xi.vec)))


def scale(tau: float, xi: Variation) -> Variation:
    return Variation(xi.anchor, xi.atom, float(tau) * xi.vec, xi.mass)


def _require_common_anchor(xi1: Variation, xi2: Variation) -> None:
    if xi1.anchor is xi2.anchor:
        return
    if not xi1.anchor.same_as(xi2.anchor):
        raise AnchorMismatch("variations are anchored at different measures")


def glue(xi1: Variation, xi2: Variation, pair_cost) -> tuple[float, GluedCoupling]:
    """Minimise sum(mass * pair_cost(v1, v2)) over gluings, atom by atom.

    ``pair_cost(V1, V2)`` maps arrow blocks (p, d), (q, d) to a (p, q) matrix.
    Atoms are processed in ascending order, so the reduction is deterministic.
    """
    _require_common_anchor(xi1, xi2)
    total = 0.0
    ks, aa, bb, mm = [], [], [], []
    for k in range(xi1.anchor.n):
        L = xi1.arrows_at(k)
        R = xi2.arrows_at(k)
        C = pair_cost(xi1.vec[L], xi2.vec[R])
        if L.size == 1 or R.size == 1:
            # forced coupling
            if L.size == 1:
                ia = np.zeros(R.size, dtype=int)
                ib = np.arange(R.size)
                w = xi2.mass[R]
            else:
                ia = np.arange(L.size)
                ib = np.zeros(L.size, dtype=int)
                w = xi1.mass[L]
        else:
            res = network_simplex(xi1.mass[L], xi2.mass[R], C)
            ia, ib = np.nonzero(res.flow)
            w = res.flow[ia, ib]
        total += float(np.sum(w * C[ia, ib]))
        ks.append(np.full(ia.size, k))
        aa.append(L[ia])
        bb.append(R[ib])
        mm.append(w)
    coupling = GluedCoupling(
        xi1, xi2, np.concatenate(ks), np.concatenate(aa), np.concatenate(bb), np.concatenate(mm)
    )
    return total, coupling


def _neg_dot(V1, V2):
    return -(V1 @ V2.T)


def _sq_diff(V1, V2):
    diff = V1[:, None, :] - V2[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _sq_sum(V1, V2):
    s = V1[:, None, :] + V2[None, :, :]
    return np.einsum("ijk,ijk->ij", s, s)


def local_inner(xi1: Variation, xi2: Variation) -> tuple[float, GluedCoupling]:
    """Maximal alignment of arrows: max over gluings of E<v1, v2>."""
    val, coupling = glue(xi1, xi2, _neg_dot)
    return 0.0 - val, coupling


def local_distance(xi1: Variation, xi2: Variation) -> tuple[float, GluedCoupling]:
    val, coupling = glue(xi1, xi2, _sq_diff)
    return float(np.sqrt(max(val, 0.0))), coupling


def min_sum_norm(xi1: Variation, xi2: Variation) -> tuple[float, GluedCoupling]:
    """Smallest local norm of a coupled sum; the residual primitive."""
    val, coupling = glue(xi1, xi2, _sq_sum)
    return float(np.sqrt(max(val, 0.0))), coupling


def coupled_sum(xi1: Variation, xi2: Variation, alpha: Optional[GluedCoupling] = None) -> Variation:
    """Sum of two variations along a gluing; default is the maximally aligned one."""
    if alpha is None:
        _, alpha = local_inner(xi1, xi2)
    else:
        _require_common_anchor(xi1, xi2)
        if alpha.left is not xi1 and alpha.left.mass.size != xi1.mass.size:
            raise CouplingMarginalMismatch("coupling was built for a different left variation")
        if alpha.right is not xi2 and alpha.right.mass.size != xi2.mass.size:
            raise CouplingMarginalMismatch("coupling was built for a different right variation")
        alpha = GluedCoupling(xi1, xi2, alpha.atom, alpha.a, alpha.b, alpha.mass)
        alpha.check()
    return Variation(xi1.anchor, alpha.atom, xi1.vec[alpha.a] + xi2.vec[alpha.b], alpha.mass)


def self_coupling(xi: Variation, other: Variation) -> GluedCoupling:
    """Pair arrow t of ``xi`` with arrow t of ``other`` (same arrow layout)."""
    if xi.mass.size != other.mass.size or not np.allclose(xi.mass, other.mass):
        raise CouplingMarginalMismatch("self coupling needs identical arrow layouts")
    idx = np.arange(xi.mass.size)
    return GluedCoupling(xi, other, xi.atom.copy(), idx, idx.copy(), xi.mass.copy())


def from_plan(
    mu: DiscreteMeasure, nu: DiscreteMeasure, plan: TransportPlan, sign: str = "displacement"
) -> Variation:
    """Variation induced by a plan: arrows y - x ("displacement") or x - y ("negative")."""
    if not (plan.source.same_as(mu, atol=1e-12) and plan.target.same_as(nu, atol=1e-12)):
        raise MarginalMismatch("plan does not couple the given measures")
    plan.check_marginals()
    disp = nu.points[plan.cols] - mu.points[plan.rows]
    if sign == "negative":
        disp = -disp
    elif sign != "displacement":
        raise ValidationError(f"unknown sign {sign!r}", field="sign")
    return Variation(mu, plan.rows, disp, plan.mass)


def apply(xi: Variation, eps: float) -> DiscreteMeasure:
    """Retraction (pi1 + eps*pi2)#xi."""
    pts = xi.anchor.points[xi.atom] + eps * xi.vec
    return canonicalize(DiscreteMeasure(pts, xi.mass / xi.mass.sum()))


@dataclass
class TangentReport:
    grid_verified: bool
    eps_grid: list[float]
    checks: list[dict]

    def __bool__(self) -> bool:
        return self.grid_verified

    def to_dict(self) -> dict:
        return {
            "status": "grid-verified" if self.grid_verified else "not-tangent",
            "grid_verified": self.grid_verified,
            "eps_grid": self.eps_grid,
            "checks": self.checks,
        }


DEFAULT_EPS_GRID = (-1e-2, -1e-3, 1e-3, 1e-2)


def is_tangent(xi: Variation, eps_grid: Optional[Sequence[float]] = None, rtol: float = 1e-8) -> TangentReport:
    """Check that (pi1, pi1 + eps*pi2)#xi is an optimal plan for every eps in the grid.

    Membership in the tangent space itself (an existential over eps and a
    closure) cannot be decided from finitely many probes, so the verdict is
    reported as "grid-verified".
    """
    grid = list(DEFAULT_EPS_GRID if eps_grid is None else eps_grid)
    sq = np.einsum("ij,ij->i", xi.vec, xi.vec)
    checks = []
    ok = True
    for eps in grid:
        plan_cost = float(eps * eps * (xi.mass @ sq))
        dist, _ = w2(xi.anchor, apply(xi, eps))
        optimal_cost = dist * dist
        passed = plan_cost - optimal_cost <= rtol * plan_cost + 1e-14
        ok &= bool(passed)
        checks.append(
            {"eps": eps, "plan_cost": plan_cost, "w2_squared": optimal_cost, "passed": bool(passed)}
        )
    return TangentReport(ok, grid, checks)
