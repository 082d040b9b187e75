"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


def lp_transport(a, b, C):
    """Transportation LP via HiGHS; returns (value, flow matrix)."""
    n, m = C.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun), res.x.reshape(n, m)


def _tree_flows(edges, a, b):
    """Flows on a spanning tree of K_{p,q} by repeatedly peeling leaves."""
    p = len(a)
    rem = np.concatenate([a, b]).astype(float)
    incident = {v: set() for v in range(p + len(b))}
    for e, (i, j) in enumerate(edges):
        incident[i].add(e)
        incident[p + j].add(e)
    flow = np.zeros(len(edges))
    live = set(range(len(edges)))
    while live:
        leaf = next(v for v, es in incident.items() if len(es) == 1)
        e = incident[leaf].pop()
        i, j = edges[e]
        other = p + j if leaf == i else i
        flow[e] = rem[leaf]
        rem[other] -= rem[leaf]
        rem[leaf] = 0.0
        incident[other].discard(e)
        live.discard(e)
    return flow


def transport_vertices(a, b):
    """All vertices of the transportation polytope, by enumerating spanning-tree bases.

    Only meant for tiny instances (p, q <= 4).
    """
    p, q = len(a), len(b)
    arcs = [(i, j) for i in range(p) for j in range(q)]
    seen = {}
    for basis in itertools.combinations(range(p * q), p + q - 1):
        parent = list(range(p + q))

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        tree = True
        for e in basis:
            i, j = arcs[e]
            ri, rj = find(i), find(p + j)
            if ri == rj:
                tree = False
                break
            parent[ri] = rj
        if not tree:
            continue
        edges = [arcs[e] for e in basis]
        x = _tree_flows(edges, a, b)
        if x.min() < -1e-12:
            continue
        F = np.zeros((p, q))
        for (i, j), f in zip(edges, x):
            F[i, j] = max(f, 0.0)
        seen[tuple(np.round(F.ravel(), 12))] = F
    return list(seen.values())


def exhaustive_glue(xi1, xi2, pair_cost):
    """min over gluings of sum mass * pair_cost, by enumerating per-atom coupling vertices."""
    total = 0.0
    for k in range(xi1.anchor.n):
        L = np.flatnonzero(xi1.atom == k)
        R = np.flatnonzero(xi2.atom == k)
        C = pair_cost(xi1.vec[L], xi2.vec[R])
        best = min(float(np.sum(F * C)) for F in transport_vertices(xi1.mass[L], xi2.mass[R]))
        total += best
    return total


def meanvar_primal_baseline(theta, rho, eps, nu_hat, iters=20000, seed=0):
    """Projected gradient ascent over atom positions X of a transported nu_hat.

    Maximises E<theta,x> + rho/2 Var<theta,x> subject to
    sum_k w_k |x_k - y_k|^2 <= eps^2 (the identity pairing upper-bounds W2).
    """
    theta = np.asarray(theta, dtype=float)
    Y = nu_hat.points
    w = nu_hat.weights
    rng = np.random.default_rng(seed)
    X = Y + 1e-3 * rng.standard_normal(Y.shape)

    def risk(X):
        t = X @ theta
        m = w @ t
        return m + 0.5 * rho * w @ (t - m) ** 2

    def project(X):
        D = X - Y
        r = np.sqrt(w @ np.einsum("ij,ij->i", D, D))
        return X if r <= eps else Y + D * (eps / r)

    X = project(X)
    step = 0.5
    f = risk(X)
    for _ in range(iters):
        t = X @ theta
        m = w @ t
        G = (1.0 + rho * (t - m))[:, None] * theta[None, :]  # per unit mass
        Xn = project(X + step * G)
        fn = risk(Xn)
        if fn >= f - 1e-15:
            if fn - f < 1e-15 and np.abs(Xn - X).max() < 1e-13:
                X, f = Xn, fn
                break
            X, f = Xn, fn
        else:
            step *= 0.5
    return f, X


def grid_argmin_1d(f, lo=-3.0, hi=3.0, step=1e-4):
    xs = np.arange(lo, hi + step / 2, step)
    vals = f(xs)
    i = int(np.argmin(vals))
    return xs[i], vals[i], xs, vals
