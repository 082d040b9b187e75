import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wassercalc.errors import EmptyMeasure, InvalidWeights, NonFiniteImage, NonFiniteInput, NonFinitePotential
from wassercalc.measures import (
    DiscreteMeasure,
    canonicalize,
    dirac,
    expected_value,
    measure,
    pushforward,
    second_moment,
    shift,
    variance,
)


def test_canonicalize_merges_duplicates():
    m = canonicalize(DiscreteMeasure([[0.0, 0.0], [0.0, 0.0]], [0.5, 0.5]))
    assert m.points.tolist() == [[0.0, 0.0]]
    assert m.weights.tolist() == [1.0]


def test_canonicalize_identity_and_zero_drop():
    m = canonicalize(DiscreteMeasure([[1.0]], [1.0]))
    assert m.same_as(dirac([1.0]))
    m = canonicalize(DiscreteMeasure([[1.0], [2.0], [3.0]], [0.2, 0.0, 0.8]))
    assert m.points.ravel().tolist() == [1.0, 3.0]
    assert np.allclose(m.weights, [0.2, 0.8], atol=1e-15)


def test_canonicalize_merge_tolerance():
    m = canonicalize(DiscreteMeasure([[0.0], [5e-10], [1e-8]], [0.25, 0.25, 0.5]))
    assert m.n == 2
    assert m.weights[0] == pytest.approx(0.5)


def test_validation_errors():
    with pytest.raises(NonFiniteInput):
        DiscreteMeasure([[np.nan]], [1.0])
    with pytest.raises(InvalidWeights, match="weights sum 0.8 ≠ 1"):
        DiscreteMeasure([[0.0], [1.0]], [0.5, 0.3])
    with pytest.raises(InvalidWeights):
        DiscreteMeasure([[0.0], [1.0]], [1.5, -0.5])
    with pytest.raises(EmptyMeasure):
        DiscreteMeasure(np.zeros((0, 2)), [])


def test_measures_are_immutable():
    m = measure([[0.0], [1.0]])
    with pytest.raises(ValueError):
        m.weights[0] = 0.3


def test_second_moment_examples():
    assert second_moment(dirac([0.0, 0.0])) == 0.0
    assert second_moment(measure([[1.0, 0.0], [0.0, 1.0]])) == pytest.approx(1.0)
    assert second_moment(measure([[2.0], [-1.0]], [0.3, 0.7])) == pytest.approx(1.9, abs=1e-15)


def test_pushforward_examples():
    assert pushforward(dirac([1.0]), lambda x: 2 * x).same_as(dirac([2.0]))
    assert pushforward(measure([[-1.0], [1.0]]), lambda x: x**2).same_as(dirac([1.0]))
    m = pushforward(measure([[1.0, 0.0], [0.0, 1.0]]), lambda x: x[:1])
    assert m.equivalent(measure([[1.0], [0.0]]))


def test_pushforward_non_finite():
    with pytest.raises(NonFiniteImage):
        with np.errstate(divide="ignore"):
            pushforward(measure([[0.0], [1.0]]), lambda x: 1.0 / x)


def test_expected_value_and_variance_examples():
    sq = lambda x: float(x @ x)  # noqa: E731
    assert expected_value(dirac([0.0]), sq) == 0.0
    assert variance(measure([[0.0], [1.0]]), lambda x: float(x[0])) == pytest.approx(0.25)
    assert variance(dirac([3.7, -1.0]), sq) == 0.0
    with pytest.raises(NonFinitePotential):
        expected_value(dirac([0.0]), lambda x: np.inf)


coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def measures(draw, max_n=6, dims=(1, 3)):
    d = draw(st.integers(*dims))
    n = draw(st.integers(1, max_n))
    pts = draw(arrays(float, (n, d), elements=coords))
    w = draw(arrays(float, n, elements=st.floats(0.01, 1.0)))
    return DiscreteMeasure(pts, w / w.sum())


@settings(max_examples=60, deadline=None)
@given(measures())
def test_canonicalize_idempotent(m):
    c = canonicalize(m)
    assert canonicalize(c).same_as(c, atol=0.0)
    assert abs(c.weights.sum() - 1.0) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(measures(), st.floats(-3, 3), st.floats(-3, 3))
def test_pushforward_composition(m, a, b):
    f = lambda x: a * x + 1.0  # noqa: E731
    g = lambda x: np.sin(x) + b  # noqa: E731
    left = pushforward(m, lambda x: g(f(x)))
    right = pushforward(pushforward(m, f), g)
    assert left.equivalent(right, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(measures(), st.data())
def test_second_moment_shift_identity(m, data):
    a = np.array(data.draw(arrays(float, m.dim, elements=coords)))
    lhs = second_moment(shift(m, a))
    rhs = second_moment(m) + 2 * a @ m.mean() + a @ a
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(measures())
def test_variance_nonnegative(m):
    assert variance(m, lambda x: float(np.sum(x**3))) >= 0.0
