"""Finitely supported probability measures on R^d."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyMeasure,
    InvalidWeights,
    NonFiniteImage,
    NonFiniteInput,
    NonFinitePotential,
    ValidationError,
)

MERGE_TOL = 1e-9
SUM_TOL = 1e-10
CANON_SUM_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Atoms ``points`` (n, d) carrying nonnegative ``weights`` (n,).

    Construction only checks shapes, finiteness, nonnegativity and a loose
    normalisation (1e-6); use :func:`canonicalize` (or :func:`measure`) to
    obtain a measure satisfying every invariant.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if w.size != 1 or pts.size == 1 else pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValidationError(f"points must be an (n, d) array, got shape {pts.shape}", field="points")
        if pts.shape[0] != w.size:
            raise ValidationError(
                f"{pts.shape[0]} points but {w.size} weights", field="weights"
            )
        if w.size == 0:
            raise EmptyMeasure("measure has no atoms", field="points")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteInput("non-finite coordinate in points", field="points")
        if not np.all(np.isfinite(w)):
            raise NonFiniteInput("non-finite weight", field="weights")
        if np.any(w < 0):
            raise InvalidWeights(f"negative weight {float(w.min())}", field="weights")
        total = float(w.sum())
        if abs(total - 1.0) > CANON_SUM_TOL:
            raise InvalidWeights(f"weights sum {total:.12g} ≠ 1", field="weights", sum=total)
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def same_as(self, other: "DiscreteMeasure", atol: float = 1e-12) -> bool:
        """Canonical equality: identical atom list (in order) and weights."""
        return (
            self.points.shape == other.points.shape
            and np.allclose(self.points, other.points, rtol=0.0, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=0.0, atol=atol)
        )

    def equivalent(self, other: "DiscreteMeasure", atol: float = 1e-9) -> bool:
        """Equality as measures, ignoring atom order."""
        a, b = canonicalize(self), canonicalize(other)
        if a.n != b.n or a.dim != b.dim:
            return False
        ia = np.lexsort(a.points.T[::-1])
        ib = np.lexsort(b.points.T[::-1])
        return bool(
            np.allclose(a.points[ia], b.points[ib], atol=atol, rtol=0)
            and np.allclose(a.weights[ia], b.weights[ib], atol=atol, rtol=0)
        )

    def __repr__(self) -> str:
        atoms = ", ".join(
            f"{w:.4g}@{tuple(np.round(p, 6).tolist())}" for p, w in zip(self.points, self.weights)
        )
        return f"DiscreteMeasure(d={self.dim}, [{atoms}])"


def canonicalize(m: DiscreteMeasure) -> DiscreteMeasure:
    """Merge atoms closer than 1e-9, drop zero weights, renormalise to sum 1.

    Atom order is the order of first occurrence, which makes the operation
    idempotent and compatible with pushforward composition.
    """
    pts, w = m.points, m.weights
    keep = w > 0
    pts, w = pts[keep], w[keep]
    if w.size == 0:
        raise EmptyMeasure("all mass removed by canonicalization")
    reps: list[int] = []
    acc: list[float] = []
    rep_pts = np.empty_like(pts)
    for k in range(pts.shape[0]):
        if reps:
            dist = np.linalg.norm(rep_pts[: len(reps)] - pts[k], axis=1)
            hit = int(np.argmin(dist))
            if dist[hit] <= MERGE_TOL:
                acc[hit] += w[k]
                continue
        rep_pts[len(reps)] = pts[k]
        reps.append(k)
        acc.append(float(w[k]))
    weights = np.asarray(acc)
    total = weights.sum()
    # skip rounding-level rescales so a second pass is an exact no-op
    if abs(total - 1.0) > 8 * np.finfo(float).eps * weights.size:
        weights = weights / total
    return DiscreteMeasure(rep_pts[: len(reps)].copy(), weights)


def measure(points, weights=None) -> DiscreteMeasure:
    """Build a canonical measure; uniform weights when ``weights`` is None."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if weights is None:
        weights = np.full(pts.shape[0], 1.0 / max(pts.shape[0], 1))
    return canonicalize(DiscreteMeasure(pts, weights))


def dirac(x) -> DiscreteMeasure:
    return DiscreteMeasure(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1), [1.0])


def second_moment(m: DiscreteMeasure) -> float:
    return float(m.weights @ np.einsum("ij,ij->i", m.points, m.points))


def _apply_map(f: Callable, points: np.ndarray) -> np.ndarray:
    out = [np.atleast_1d(np.asarray(f(x), dtype=float)) for x in points]
    sizes = {o.size for o in out}
    if len(sizes) != 1:
        raise NonFiniteImage("map returned vectors of inconsistent size")
    return np.vstack(out)


def pushforward(m: DiscreteMeasure, f: Callable) -> DiscreteMeasure:
    """Image measure f#m, canonicalized (colliding images are merged)."""
    img = _apply_map(f, m.points)
    if not np.all(np.isfinite(img)):
        bad = int(np.where(~np.all(np.isfinite(img), axis=1))[0][0])
        raise NonFiniteImage(f"map is not finite at atom {bad}", atom=bad)
    return canonicalize(DiscreteMeasure(img, m.weights))


def shift(m: DiscreteMeasure, a) -> DiscreteMeasure:
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != m.dim:
        raise DimensionMismatch(f"shift of dim {a.size} for measure of dim {m.dim}")
    return canonicalize(DiscreteMeasure(m.points + a, m.weights))


def potential_values(m: DiscreteMeasure, V) -> np.ndarray:
    """Evaluate a potential on every atom.

    ``V`` is either a catalog :class:`~wassercalc.potentials.Potential` (which
    evaluates row-wise on arrays) or any host callable of one point.
    """
    if hasattr(V, "values"):
        vals = np.asarray(V.values(m.points), dtype=float).reshape(-1)
    else:
        vals = np.array([float(V(x)) for x in m.points])
    if not np.all(np.isfinite(vals)):
        bad = int(np.where(~np.isfinite(vals))[0][0])
        raise NonFinitePotential(f"potential is not finite at atom {bad}", atom=bad)
    return vals


def expected_value(m: DiscreteMeasure, V) -> float:
    return float(m.weights @ potential_values(m, V))


def variance(m: DiscreteMeasure, V) -> float:
    vals = potential_values(m, V)
    mean = m.weights @ vals
    # centred form is more accurate than E[V^2] - E[V]^2 and equal in exact arithmetic
    var = float(m.weights @ (vals - mean) ** 2)
    if -1e-12 <= var < 0.0:
        var = 0.0
    return var
