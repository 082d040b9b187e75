"""Exact discrete optimal transport.

The solver is a transportation network simplex on a dense cost matrix.
Degeneracy is handled by the classical lexicographic perturbation of the
supplies (source i gets ``+eps``, the last sink gets ``+n*eps``): each basic
flow is carried as a pair ``(x0, x1)`` meaning ``x0 + eps*x1``, so the
perturbation is exact and disappears on exit by dropping ``x1``.
Entering arcs follow Bland's rule (first arc in row-major order with a
negative reduced cost).
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    MarginalMismatch,
    MissingPotentials,
    SolverStall,
    UnsupportedInstance,
    ValidationError,
)
from .measures import DiscreteMeasure

MARGINAL_TOL = 1e-9


# --------------------------------------------------------------------------
# cost functions


@dataclass(frozen=True)
class CostFunction:
    """Ground cost c(x, y) with optional partial gradient in x."""

    eval: Callable[[np.ndarray, np.ndarray], float]
    grad_x: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "custom"
    # vectorised fast path: (X (n,d), Y (m,d)) -> (n, m)
    pairwise: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, repr=False
    )

    def matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self.pairwise is not None:
            C = np.asarray(self.pairwise(X, Y), dtype=float)
        else:
            C = np.array([[float(self.eval(x, y)) for y in Y] for x in X], dtype=float)
        if not np.all(np.isfinite(C)):
            i, j = map(int, np.argwhere(~np.isfinite(C))[0])
            raise ValidationError(f"cost is not finite on atom pair ({i}, {j})", pair=[i, j])
        return C

    def to_dict(self) -> dict:
        return {"name": self.name}


def _sq_pairwise(X, Y):
    # explicit differences: exact zero for coincident atoms, unlike the
    # |x|^2 + |y|^2 - 2<x,y> expansion
    diff = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def sqeuclidean() -> CostFunction:
    return CostFunction(
        eval=lambda x, y: float(np.sum((np.asarray(x) - np.asarray(y)) ** 2)),
        grad_x=lambda x, y: 2.0 * (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)),
        name="sqeuclidean",
        pairwise=_sq_pairwise,
    )


def pnorm(p: float) -> CostFunction:
    """c(x, y) = ||x - y||^p (Euclidean norm); differentiable for p > 1."""
    if p <= 0:
        raise ValidationError(f"pnorm exponent must be positive, got {p}", field="cost")

    def grad(x, y):
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        r = np.linalg.norm(diff)
        if r == 0.0:
            return np.zeros_like(diff)
        return p * r ** (p - 2.0) * diff

    def pairwise(X, Y):
        diff = X[:, None, :] - Y[None, :, :]
        return np.linalg.norm(diff, axis=2) ** p

    return CostFunction(
        eval=lambda x, y: float(np.linalg.norm(np.asarray(x) - np.asarray(y)) ** p),
        grad_x=grad if p > 1 else None,
        name=f"pnorm:{p:g}",
        pairwise=pairwise,
    )


def cost_from_name(name: str) -> CostFunction:
    if name == "sqeuclidean":
        return sqeuclidean()
    if name.startswith("pnorm:"):
        try:
            p = float(name.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad pnorm exponent in {name!r}", field="cost") from None
        return pnorm(p)
    raise ValidationError(f"unknown cost {name!r}", field="cost")


# --------------------------------------------------------------------------
# plans


@dataclass(frozen=True, eq=False)
class TransportPlan:
    source: DiscreteMeasure
    target: DiscreteMeasure
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    value: float
    phi: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    cost_name: str = "custom"

    def __post_init__(self) -> None:
        for name in ("rows", "cols"):
            a = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        mass = np.asarray(self.mass, dtype=float).reshape(-1)
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.rows, self.cols, self.mass)]

    def matrix(self) -> np.ndarray:
        P = np.zeros((self.source.n, self.target.n))
        np.add.at(P, (self.rows, self.cols), self.mass)
        return P

    def check_marginals(self, tol: float = MARGINAL_TOL) -> None:
        P = self.matrix()
        r = np.abs(P.sum(1) - self.source.weights).max()
        c = np.abs(P.sum(0) - self.target.weights).max()
        if r > tol or c > tol:
            raise MarginalMismatch(
                f"plan marginals off by {max(r, c):.3g}", row_error=float(r), col_error=float(c)
            )

    @property
    def has_potentials(self) -> bool:
        return self.phi is not None and self.psi is not None

    def dual_value(self) -> float:
        if not self.has_potentials:
            raise MissingPotentials("plan carries no dual potentials")
        return float(self.source.weights @ self.phi + self.target.weights @ self.psi)

    def to_dict(self) -> dict:
        out = {
            "entries": [[i, j, w] for i, j, w in self.entries],
            "value": float(self.value),
        }
        if self.has_potentials:
            out["phi"] = [float(x) for x in self.phi]
            out["psi"] = [float(x) for x in self.psi]
        return out


# --------------------------------------------------------------------------
# network simplex core on (supply, demand, cost matrix)


@dataclass
class SimplexResult:
    flow: np.ndarray  # dense (n, m), unperturbed
    u: np.ndarray
    v: np.ndarray
    basis: list[tuple[int, int]]
    iterations: int
    value: float


def _tree_flows(basis, n, m, supply, demand):
    """Solve the basic flows of a spanning tree by leaf elimination.

    ``supply`` (n, k) and ``demand`` (m, k) may carry several right-hand sides
    at once (k = 2 for the lexicographic pair).
    """
    rem = np.vstack([supply, demand]).astype(float).copy()
    adj: list[list[int]] = [[] for _ in range(n + m)]
    for e, (i, j) in enumerate(basis):
        adj[i].append(e)
        adj[n + j].append(e)
    deg = np.array([len(a) for a in adj])
    done = np.zeros(len(basis), dtype=bool)
    flows = np.zeros((len(basis), rem.shape[1]))
    queue = deque(node for node in range(n + m) if deg[node] == 1)
    while queue:
        node = queue.popleft()
        if deg[node] != 1:
            continue
        e = next(e for e in adj[node] if not done[e])
        i, j = basis[e]
        other = n + j if node == i else i
        f = rem[node].copy()
        flows[e] = f
        rem[other] -= f
        rem[node] = 0.0
        done[e] = True
        deg[node] -= 1
        deg[other] -= 1
        if deg[other] == 1:
            queue.append(other)
    return flows


def _tree_potentials(basis, n, m, C):
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n + m)]
    for i, j in basis:
        adj[i].append((n + j, i * m + j))
        adj[n + j].append((i, i * m + j))
    pot = np.full(n + m, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other, _ in adj[node]:
            if np.isnan(pot[other]):
                if node < n:
                    pot[other] = C[node, other - n] - pot[node]
                else:
                    pot[other] = C[other, node - n] - pot[node]
                queue.append(other)
    return pot[:n], pot[n:]


def _tree_path(basis, n, m, start, goal):
    """Arcs (as basis indices) on the tree path from node ``start`` to ``goal``."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n + m)]
    for e, (i, j) in enumerate(basis):
        adj[i].append((n + j, e))
        adj[n + j].append((i, e))
    parent = {start: (None, None)}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other, e in adj[node]:
            if other not in parent:
                parent[other] = (node, e)
                queue.append(other)
    path = []
    node = goal
    while node != start:
        prev, e = parent[node]
        path.append(e)
        node = prev
    return path  # ordered from goal back to start


def _northwest_corner(n, m, supply, demand):
    """Initial strongly feasible tree under the lexicographic perturbation."""
    s = supply.copy()
    d = demand.copy()
    basis = []
    i = j = 0
    while i < n and j < m:
        basis.append((i, j))
        if i == n - 1:
            j += 1
            continue
        if j == m - 1:
            i += 1
            continue
        diff = s[i] - d[j]
        if _lex_less(diff, np.zeros(2), scale=1.0):
            d[j] -= s[i]
            i += 1
        else:
            s[i] -= d[j]
            j += 1
    return basis


def _lex_less(a, b, scale=1.0, tol=1e-13):
    if abs(a[0] - b[0]) > tol * scale:
        return a[0] < b[0]
    return a[1] < b[1]


def network_simplex(a, b, C, max_iter: Optional[int] = None) -> SimplexResult:
    """Min-cost transportation LP with marginals ``a`` (n,) and ``b`` (m,).

    Returns an optimal basic solution together with dual potentials
    ``u, v`` such that ``u_i + v_j <= C_ij`` with equality on the basis.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    if max_iter is None:
        max_iter = 50 * (n + m) ** 2
    supply = np.column_stack([a, np.ones(n)])
    demand = np.column_stack([b, np.zeros(m)])
    demand[m - 1, 1] = n
    scale = max(1.0, float(a.max()), float(b.max()))
    ctol = 1e-12 * max(1.0, float(np.abs(C).max()))

    basis = _northwest_corner(n, m, supply, demand)
    it = 0
    while True:
        u, v = _tree_potentials(basis, n, m, C)
        reduced = C - u[:, None] - v[None, :]
        neg = np.flatnonzero(reduced.ravel() < -ctol)
        if neg.size == 0:
            break
        if it >= max_iter:
            raise SolverStall(
                f"network simplex exceeded {max_iter} pivots on a {n}x{m} instance",
                cap=max_iter,
                n=n,
                m=m,
            )
        it += 1
        e_in = int(neg[0])  # Bland: lowest index
        ii, jj = divmod(e_in, m)
        flows = _tree_flows(basis, n, m, supply, demand)
        path = _tree_path(basis, n, m, ii, n + jj)  # from sink jj back to source ii
        minus = path[0::2]  # first arc touching the sink loses flow, then alternate
        leave = minus[0]
        for e in minus[1:]:
            fe, fl = flows[e], flows[leave]
            if _lex_less(fe, fl, scale) or (
                not _lex_less(fl, fe, scale) and basis[e] < basis[leave]
            ):
                leave = e
        basis[leave] = (ii, jj)

    flows = _tree_flows(basis, n, m, supply, demand)
    x0 = flows[:, 0]
    F = np.zeros((n, m))
    for (i, j), f in zip(basis, x0):
        F[i, j] += max(f, 0.0)
    F[F <= 1e-15 * scale] = 0.0
    return SimplexResult(F, u, v, list(basis), it, float(np.sum(F * C)))


# --------------------------------------------------------------------------
# measure-level operations


def _plan_from_flow(mu, nu, F, C, phi, psi, cost_name) -> TransportPlan:
    rows, cols = np.nonzero(F)
    mass = F[rows, cols]
    value = float(np.sum(mass * C[rows, cols]))
    return TransportPlan(mu, nu, rows, cols, mass, value, phi, psi, cost_name)


def solve_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, c: Optional[CostFunction] = None) -> TransportPlan:
    """Optimal plan between two discrete measures with dual potentials."""
    c = c or sqeuclidean()
    C = c.matrix(mu.points, nu.points)
    res = network_simplex(mu.weights, nu.weights, C)
    return _plan_from_flow(mu, nu, res.flow, C, res.u.copy(), res.v.copy(), c.name)


def w2(mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[float, TransportPlan]:
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"w2 between dims {mu.dim} and {nu.dim}")
    plan = solve_ot(mu, nu, sqeuclidean())
    return float(np.sqrt(max(plan.value, 0.0))), plan


def brute_force_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, c: Optional[CostFunction] = None) -> TransportPlan:
    """Exact optimum over permutation couplings (uniform, equal sizes, n <= 8)."""
    c = c or sqeuclidean()
    n = mu.n
    if nu.n != n or n > 8:
        raise UnsupportedInstance(f"brute force needs equal sizes <= 8, got {mu.n} and {nu.n}")
    for m_ in (mu, nu):
        if not np.allclose(m_.weights, 1.0 / n, atol=1e-12, rtol=0):
            raise UnsupportedInstance("brute force needs uniform weights")
    C = c.matrix(mu.points, nu.points)
    best, best_perm = np.inf, None
    idx = np.arange(n)
    for perm in itertools.permutations(range(n)):
        val = C[idx, perm].sum()
        if val < best:
            best, best_perm = val, perm
    return TransportPlan(
        mu, nu, idx, np.asarray(best_perm), np.full(n, 1.0 / n), float(best / n), cost_name=c.name
    )


@dataclass
class OptimalityReport:
    optimal: bool
    dual_feasible: Optional[bool]
    complementary_slackness: Optional[bool]
    max_dual_violation: Optional[float]
    max_slackness_violation: Optional[float]
    cycle_checked: bool
    violated_cycle: Optional[list[tuple[int, int]]] = None
    cycle_gain: Optional[float] = None

    def __bool__(self) -> bool:
        return self.optimal

    def to_dict(self) -> dict:
        return {
            "optimal": self.optimal,
            "dual_feasible": self.dual_feasible,
            "complementary_slackness": self.complementary_slackness,
            "max_dual_violation": self.max_dual_violation,
            "max_slackness_violation": self.max_slackness_violation,
            "cycle_checked": self.cycle_checked,
            "violated_cycle": self.violated_cycle,
            "cycle_gain": self.cycle_gain,
        }


def _cycle_violation(plan: TransportPlan, C: np.ndarray, tol: float, max_len: int = 4):
    """Search cycles of support pairs violating c-cyclical monotonicity."""
    support = list(zip(plan.rows.tolist(), plan.cols.tolist()))
    for k in range(2, min(max_len, len(support)) + 1):
        for combo in itertools.permutations(range(len(support)), k):
            if combo[0] != min(combo):
                continue
            pairs = [support[t] for t in combo]
            here = sum(C[i, j] for i, j in pairs)
            shifted = sum(C[pairs[t][0], pairs[(t + 1) % k][1]] for t in range(k))
            if here > shifted + tol:
                return pairs, float(here - shifted)
    return None, None


def verify_optimality(plan: TransportPlan, c: Optional[CostFunction] = None, tol: float = 1e-9) -> OptimalityReport:
    """Certify a plan through duality and, when cheap, cyclical monotonicity."""
    c = c or sqeuclidean()
    plan.check_marginals()
    C = c.matrix(plan.source.points, plan.target.points)
    scale = max(1.0, float(np.abs(C).max()))
    cycle_ok = c.name == "sqeuclidean" and plan.rows.size <= 8
    if not plan.has_potentials and not cycle_ok:
        raise MissingPotentials(
            "plan has no dual potentials and the cycle check does not apply",
            support=int(plan.rows.size),
        )
    dual_ok = cs_ok = None
    dv = sv = None
    if plan.has_potentials:
        red = C - plan.phi[:, None] - plan.psi[None, :]
        dv = float(max(0.0, -red.min()))
        sv = float(np.abs(red[plan.rows, plan.cols]).max()) if plan.rows.size else 0.0
        dual_ok = dv <= tol * scale
        cs_ok = sv <= tol * scale
    cyc = gain = None
    if cycle_ok:
        cyc, gain = _cycle_violation(plan, C, tol * scale)
    optimal = (dual_ok is not False) and (cs_ok is not False) and cyc is None
    return OptimalityReport(optimal, dual_ok, cs_ok, dv, sv, cycle_ok, cyc, gain)


# --------------------------------------------------------------------------
# alternate optimal vertices


@dataclass
class VertexSearch:
    plans: list[TransportPlan]
    bases_visited: int
    exhaustive: bool

    def to_dict(self) -> dict:
        return {
            "vertices": len(self.plans),
            "bases_visited": self.bases_visited,
            "exhaustive": self.exhaustive,
        }


def optimal_vertices(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    c: Optional[CostFunction] = None,
    max_size: int = 36,
    max_bases: int = 4000,
) -> VertexSearch:
    """Vertices of the optimal face, searched by zero-reduced-cost pivots.

    The first plan is always the one :func:`solve_ot` returns. Enumeration is
    only attempted when ``n*m <= max_size``; otherwise a single plan is
    returned with ``exhaustive=False``.
    """
    c = c or sqeuclidean()
    C = c.matrix(mu.points, nu.points)
    n, m = C.shape
    res = network_simplex(mu.weights, nu.weights, C)
    first = _plan_from_flow(mu, nu, res.flow, C, res.u.copy(), res.v.copy(), c.name)
    if n * m > max_size:
        return VertexSearch([first], 1, False)

    ctol = 1e-10 * max(1.0, float(np.abs(C).max()))
    reduced = C - res.u[:, None] - res.v[None, :]
    zero = np.abs(reduced) <= ctol
    a, b = mu.weights, nu.weights
    ftol = 1e-12

    def flows_of(basis):
        f = _tree_flows(basis, n, m, a[:, None], b[:, None])[:, 0]
        return f

    def key_of(basis, f):
        F = np.zeros((n, m))
        for (i, j), x in zip(basis, f):
            F[i, j] += x
        F[np.abs(F) <= ftol] = 0.0
        return tuple(np.round(F.ravel(), 11)), F

    start = tuple(sorted(res.basis))
    seen_bases = {start}
    queue = deque([list(start)])
    vertices: dict = {}
    order: list = []
    exhaustive = True
    while queue:
        basis = queue.popleft()
        f = flows_of(basis)
        key, F = key_of(basis, f)
        if key not in vertices:
            vertices[key] = F
            order.append(key)
        in_basis = set(basis)
        for e_in in range(n * m):
            ii, jj = divmod(e_in, m)
            if (ii, jj) in in_basis:
                continue
            path = _tree_path(basis, n, m, ii, n + jj)
            minus = path[0::2]
            theta = min(f[e] for e in minus)
            if not zero[ii, jj] and theta > ftol:
                continue  # would leave the optimal face
            for e in minus:
                if f[e] > theta + ftol:
                    continue
                nb = list(basis)
                nb[e] = (ii, jj)
                key_b = tuple(sorted(nb))
                if key_b in seen_bases:
                    continue
                nf = flows_of(nb)
                if nf.min() < -ftol or any(
                    x > ftol and not zero[arc] for arc, x in zip(nb, nf)
                ):
                    continue
                if len(seen_bases) >= max_bases:
                    exhaustive = False
                    continue
                seen_bases.add(key_b)
                queue.append(list(key_b))
    plans = [first]
    first_key = tuple(np.round(first.matrix().ravel(), 11))
    for key in order:
        if key == first_key:
            continue
        F = vertices[key]
        plans.append(_plan_from_flow(mu, nu, F, C, res.u.copy(), res.v.copy(), c.name))
    return VertexSearch(plans, len(seen_bases), exhaustive)
