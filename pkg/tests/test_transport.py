import itertools

import numpy as np
import pytest
from conftest import random_measure
from oracles import lp_transport, transport_vertices

from wassercalc.errors import MissingPotentials, UnsupportedInstance
from wassercalc.measures import dirac, measure, shift
from wassercalc.transport import (
    TransportPlan,
    brute_force_ot,
    cost_from_name,
    network_simplex,
    optimal_vertices,
    pnorm,
    solve_ot,
    sqeuclidean,
    verify_optimality,
    w2,
)

MU_EX = measure([[0.0, 0.0], [1.0, 1.0]])
NU_EX = measure([[1.0, 0.0], [0.0, 1.0]])


def test_dirac_plan():
    plan = solve_ot(dirac([0.0, 1.0]), dirac([3.0, -1.0]))
    assert plan.entries == [(0, 0, 1.0)]
    assert plan.value == pytest.approx(13.0)
    assert verify_optimality(plan)


def test_example_value():
    plan = solve_ot(MU_EX, NU_EX)
    assert plan.value == pytest.approx(1.0, abs=1e-12)
    d, _ = w2(MU_EX, NU_EX)
    assert d == pytest.approx(1.0, abs=1e-12)


def test_w2_identity_is_diagonal():
    m = measure([[0.0], [2.0], [5.0]], [0.2, 0.3, 0.5])
    d, plan = w2(m, m)
    assert d == 0.0
    assert np.allclose(plan.matrix(), np.diag(m.weights))


def test_brute_force_small_cases(rng):
    m = measure([[1.0, 2.0]])
    assert brute_force_ot(m, m).entries == [(0, 0, 1.0)]
    m = measure([[0.0], [1.0]])
    plan = brute_force_ot(m, m)
    assert plan.value == 0.0 and plan.cols.tolist() == [0, 1]
    a, b = random_measure(rng, 4, 2, uniform=True), random_measure(rng, 4, 2, uniform=True)
    assert solve_ot(a, b).value == pytest.approx(brute_force_ot(a, b).value, abs=1e-9)


def test_brute_force_rejects():
    with pytest.raises(UnsupportedInstance):
        brute_force_ot(measure([[0.0], [1.0]], [0.3, 0.7]), measure([[0.0], [1.0]]))
    big = measure(np.arange(9.0).reshape(-1, 1))
    with pytest.raises(UnsupportedInstance):
        brute_force_ot(big, big)


def test_verify_detects_swap():
    mu = measure([[0.0], [1.0]])
    nu = measure([[0.0], [1.0]])
    bad = TransportPlan(mu, nu, [0, 1], [1, 0], [0.5, 0.5], 1.0, cost_name="sqeuclidean")
    rep = verify_optimality(bad)
    assert not rep
    assert rep.violated_cycle is not None and rep.cycle_gain == pytest.approx(2.0)


def test_verify_needs_potentials_without_cycle_check():
    mu = measure([[0.0], [1.0]])
    bad = TransportPlan(mu, mu, [0, 1], [0, 1], [0.5, 0.5], 0.0, cost_name="pnorm")
    with pytest.raises(MissingPotentials):
        verify_optimality(bad, pnorm(1.0))


@pytest.mark.parametrize("seed", range(15))
def test_matches_lp_on_general_weights(seed):
    rng = np.random.default_rng(seed)
    n, m, d = rng.integers(1, 8), rng.integers(1, 8), rng.integers(1, 4)
    mu, nu = random_measure(rng, n, d), random_measure(rng, m, d)
    C = sqeuclidean().matrix(mu.points, nu.points)
    plan = solve_ot(mu, nu)
    ref, _ = lp_transport(mu.weights, nu.weights, C)
    assert plan.value == pytest.approx(ref, abs=1e-9)
    plan.check_marginals()
    assert plan.dual_value() == pytest.approx(plan.value, abs=1e-9)
    red = C - plan.phi[:, None] - plan.psi[None, :]
    assert red.min() >= -1e-9
    assert np.all(plan.mass > 0)
    assert plan.value == pytest.approx(float(plan.mass @ C[plan.rows, plan.cols]), rel=1e-9, abs=1e-12)


def test_degenerate_instance():
    # equal marginals on a grid: every basis is degenerate
    pts = [[float(i)] for i in range(4)]
    plan = solve_ot(measure(pts), measure([[p[0] + 0.5] for p in pts]))
    assert plan.value == pytest.approx(0.25)
    assert verify_optimality(plan)


def test_pnorm_cost_and_grad(rng):
    c = pnorm(3.0)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    h = 1e-6
    fd = np.array([(c.eval(x + h * e, y) - c.eval(x - h * e, y)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(c.grad_x(x, y), fd, rtol=1e-5, atol=1e-8)
    assert cost_from_name("pnorm:3").name == c.name
    assert cost_from_name("sqeuclidean").name == "sqeuclidean"


def test_translation_equivariance(rng):
    for _ in range(10):
        mu, nu = random_measure(rng, 4, 2), random_measure(rng, 5, 2)
        a = 3 * rng.standard_normal(2)
        assert w2(shift(mu, a), shift(nu, a))[0] == pytest.approx(w2(mu, nu)[0], abs=1e-9)


def test_optimal_vertices_example():
    search = optimal_vertices(MU_EX, NU_EX)
    assert search.exhaustive
    assert len(search.plans) == 2
    assert search.plans[0].entries == solve_ot(MU_EX, NU_EX).entries
    for p in search.plans:
        assert p.value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_optimal_vertices_match_enumeration(seed):
    # integer costs on a tiny grid produce ties, i.e. several optimal vertices
    rng = np.random.default_rng(100 + seed)
    mu = measure(rng.integers(0, 2, size=(3, 1)).astype(float) + [[0.0], [2.0], [4.0]])
    nu = measure(rng.integers(0, 3, size=(3, 1)).astype(float) + [[0.5], [2.5], [4.5]])
    C = sqeuclidean().matrix(mu.points, nu.points)
    best = min(float(np.sum(F * C)) for F in transport_vertices(mu.weights, nu.weights))
    expected = {
        tuple(np.round(F.ravel(), 9))
        for F in transport_vertices(mu.weights, nu.weights)
        if abs(float(np.sum(F * C)) - best) <= 1e-10
    }
    got = {tuple(np.round(p.matrix().ravel(), 9)) for p in optimal_vertices(mu, nu).plans}
    assert got == expected


def test_network_simplex_iteration_count_is_finite():
    a = np.full(6, 1 / 6)
    C = np.array(list(itertools.product(range(6), repeat=2)), dtype=float).sum(1).reshape(6, 6)
    res = network_simplex(a, a, C)
    assert res.iterations <= 50 * 12**2
    assert res.value == pytest.approx(lp_transport(a, a, C)[0], abs=1e-12)
