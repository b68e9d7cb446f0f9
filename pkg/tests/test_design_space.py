import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gesbo.design_space import (
    ParameterSpace,
    denormalize,
    distance,
    full_factorial,
    latin_hypercube,
    normalize,
    unit_latin_hypercube,
)


def space1(lo=0.0, hi=10.0):
    return ParameterSpace([("a", lo, hi)])


def test_normalize_examples():
    assert normalize(space1(), [0.0])[0] == 0.0
    assert normalize(space1(), [10.0])[0] == 1.0
    assert normalize(space1(2.0, 4.0), [3.0])[0] == 0.5


def test_denormalize_hits_bounds_exactly():
    s = ParameterSpace([("a", 0.1, 0.7), ("b", -3.3, 1e5)])
    np.testing.assert_array_equal(denormalize(s, [0.0, 1.0]), [0.1, 1e5])
    np.testing.assert_array_equal(denormalize(s, [1.0, 0.0]), [0.7, -3.3])


@pytest.mark.parametrize("bad", [[], [("a", 1, 1)], [("a", 2, 1)], [("a", 0, 1), ("a", 0, 2)],
                                 [("1x", 0, 1)], [("a", 0, np.inf)]])
def test_invalid_spaces_rejected(bad):
    with pytest.raises(ValueError):
        ParameterSpace(bad)


def test_check_rejects_wrong_dimension_and_out_of_bounds():
    s = ParameterSpace([("a", 0, 1), ("b", 0, 1)])
    with pytest.raises(ValueError):
        s.normalize([0.5])
    with pytest.raises(ValueError):
        s.normalize([0.5, 1.5])
    with pytest.raises(ValueError):
        s.check([0.5, np.nan])


def test_distance_examples():
    assert distance(space1(), [3.0], [3.0]) == 0.0
    assert distance(ParameterSpace([("a", 0, 2)]), [0.0], [2.0]) == 1.0
    sq = ParameterSpace([("a", 0, 1), ("b", 0, 1)])
    assert distance(sq, [0, 0], [1, 1]) == pytest.approx(np.sqrt(2), abs=1e-15)


def test_full_factorial_examples():
    sq = ParameterSpace([("a", 0, 1), ("b", 0, 1)])
    np.testing.assert_array_equal(full_factorial(sq, [2, 2]), [[0, 0], [0, 1], [1, 0], [1, 1]])
    np.testing.assert_array_equal(full_factorial(ParameterSpace([("a", 0, 1)]), [2]), [[0], [1]])
    s = ParameterSpace([("w_s", 0.5, 3.0), ("gap_2", 0.2, 1.2)])
    pts = full_factorial(s, [3, 3])
    assert pts.shape == (9, 2)
    for corner in ([0.5, 0.2], [0.5, 1.2], [3.0, 0.2], [3.0, 1.2]):
        assert any(np.array_equal(p, corner) for p in pts)


def test_full_factorial_errors():
    sq = ParameterSpace([("a", 0, 1), ("b", 0, 1)])
    with pytest.raises(ValueError):
        full_factorial(sq, [1, 3])
    with pytest.raises(ValueError):
        full_factorial(sq, [3])
    with pytest.raises(ValueError):
        full_factorial(sq, [1001, 1001])


def assert_bin_occupancy(unit, n):
    for col in unit.T:
        bins = np.floor(col * n).astype(int)
        assert sorted(bins) == list(range(n))


def test_lhs_examples():
    s9 = ParameterSpace([(f"p{i}", -i, i + 1) for i in range(9)])
    x = latin_hypercube(s9, 20, seed=7)
    assert x.shape == (20, 9)
    assert_bin_occupancy(s9.normalize(x), 20)

    one = latin_hypercube(space1(), 1, seed=0)
    assert one.shape == (1, 1) and 0.0 <= one[0, 0] <= 10.0

    sq = ParameterSpace([("a", 0, 1), ("b", 0, 1)])
    a, b = latin_hypercube(sq, 5, seed=1), latin_hypercube(sq, 5, seed=2)
    assert not np.array_equal(a, b)
    assert_bin_occupancy(a, 5)
    assert_bin_occupancy(b, 5)
    np.testing.assert_array_equal(a, latin_hypercube(sq, 5, seed=1))


def test_lhs_rejects_empty():
    with pytest.raises(ValueError):
        latin_hypercube(space1(), 0, seed=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_lhs_bin_occupancy_property(n, d, seed):
    u = unit_latin_hypercube(d, n, seed)
    assert u.shape == (n, d)
    assert np.all((u >= 0) & (u < 1))
    assert_bin_occupancy(u, n)


bounds = st.tuples(st.floats(-1e6, 1e6), st.floats(1e-3, 1e6)).map(lambda t: (t[0], t[0] + t[1]))


@settings(max_examples=100, deadline=None)
@given(st.lists(bounds, min_size=1, max_size=5), st.data())
def test_round_trip_property(bnds, data):
    s = ParameterSpace([(f"p{i}", lo, hi) for i, (lo, hi) in enumerate(bnds)])
    u = np.array(data.draw(st.lists(st.floats(0, 1), min_size=s.dim, max_size=s.dim)))
    x = s.denormalize(u)
    back = s.denormalize(s.normalize(x))
    np.testing.assert_allclose(back, x, rtol=1e-12, atol=1e-12 * np.max(np.abs(s.span)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_distance_triangle_inequality(d, seed):
    rng = np.random.default_rng(seed)
    s = ParameterSpace([(f"p{i}", -rng.random(), 1 + 10 * rng.random()) for i in range(d)])
    a, b, c = s.denormalize(rng.random((3, d)))
    assert distance(s, a, c) <= distance(s, a, b) + distance(s, b, c) + 1e-12
    assert distance(s, a, b) == pytest.approx(distance(s, b, a), abs=1e-15)
