import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parkscvx.stc import OR, SINGLE, AffineFn, Stc, eta_star, linearize, parking_gap_stc, residual


def single(g, c):
    # g and c as constants over a 1-D dummy state
    return Stc((AffineFn((0.0,), g),), AffineFn((0.0,), c), SINGLE)


def implication_holds(gs, c):
    return not any(g < 0 for g in gs) or c <= 0


@pytest.mark.parametrize("g,expected", [(-0.5, 0.5), (0.3, 0.0), (0.0, 0.0)])
def test_eta_star_examples(g, expected):
    assert eta_star(g) == expected


@pytest.mark.parametrize("g,c,h", [(-1, -2, -2), (-1, 0.5, 0.5), (2, 5, 0)])
def test_single_residual_examples(g, c, h):
    assert residual(single(g, c), [0.0]) == h


def test_or_residual_example():
    s = Stc((AffineFn((0.0,), 1.0), AffineFn((0.0,), -0.5)), AffineFn((0.0,), 1.0), OR)
    assert residual(s, [0.0]) == 0.5


def test_truth_table_on_sign_grid():
    for g1, g2, c in itertools.product((-1.0, 0.0, 1.0), repeat=3):
        s = Stc((AffineFn((0.0,), g1), AffineFn((0.0,), g2)), AffineFn((0.0,), c), OR)
        assert (residual(s, [0.0]) <= 0) == implication_holds((g1, g2), c)


def test_truth_table_dense_grid():
    # g1 = x0, g2 = x1, c = x2 on a 21^3 grid (9261 points), exact comparison
    s = Stc((AffineFn((1.0, 0, 0)), AffineFn((0, 1.0, 0))), AffineFn((0, 0, 1.0)), OR)
    v = np.linspace(-1, 1, 21)
    Z = np.array(list(itertools.product(v, v, v)))
    h = residual(s, Z)
    expect = np.array([implication_holds(z[:2], z[2]) for z in Z])
    assert Z.shape[0] >= 1000
    np.testing.assert_array_equal(h <= 0, expect)


def test_complementarity_sweep():
    g = np.linspace(-1e3, 1e3, 100001)
    e = eta_star(g)
    assert np.all(e >= 0)
    assert np.all(e * (g + e) == 0)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_complementarity_property(g):
    e = eta_star(g)
    assert e >= 0 and e * (g + e) == 0


def test_linearize_example():
    s = Stc((AffineFn((1.0, 0.0), 1.0),), AffineFn((0.0, 1.0), -2.0))
    h, grad = linearize(s, np.array([-3.0, 5.0]))
    assert h == 6.0
    np.testing.assert_array_equal(grad, (-3.0, 2.0))


def test_dormant_linearizes_to_zero():
    s = parking_gap_stc(1.0, 2.0)
    # inside the gap: both triggers positive
    h, grad = linearize(s, np.array([0.2, 0.5, 1.0]))
    assert h == 0 and np.all(grad == 0)
    # exactly on the trigger boundary counts as dormant
    h, grad = linearize(s, np.array([1.0, 0.5, 0.0]))
    assert h == 0 and np.all(grad == 0)


def test_linearize_matches_finite_differences(rng):
    s = parking_gap_stc(1.0, 2.0)
    worst = 0.0
    for _ in range(500):
        z = rng.uniform([-5, -1, -4], [5, 6, 4])
        if abs(z[0]) - 1.0 < 1e-3:  # stay off the kinks of min
            continue
        h, grad = linearize(s, z)
        fd = np.zeros(3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1e-6
            fd[j] = (residual(s, z + e) - residual(s, z - e)) / 2e-6
        assert h == residual(s, z)
        worst = max(worst, np.abs(grad - fd).max())
    assert worst <= 1e-6


def test_or_tie_goes_to_first_trigger():
    s = Stc((AffineFn((1.0, 0.0), -1.0), AffineFn((0.0, 1.0), -1.0)), AffineFn((0.0, 0.0), 1.0), OR)
    _, grad = linearize(s, np.array([0.0, 0.0]))
    np.testing.assert_array_equal(grad, (-1.0, 0.0))


@pytest.mark.parametrize("z,sign", [((-2, 3, 0), -1), ((0, 0.5, 0), 0), ((1.5, 1, 0), 1)])
def test_parking_gap_examples(z, sign):
    h = residual(parking_gap_stc(1.0, 2.0), np.array(z, float))
    assert np.sign(h) == sign


def test_batch_linearize_consistent(rng):
    s = parking_gap_stc(2.5, 2.0)
    Z = rng.uniform([-6, 0, -1], [6, 5, 1], (50, 3))
    H, G = linearize(s, Z)
    for z, h, g in zip(Z, H, G):
        h1, g1 = linearize(s, z)
        assert h == h1
        np.testing.assert_array_equal(g, g1)


def test_construction_errors():
    with pytest.raises(ValueError):
        Stc((), AffineFn((1.0,)))
    with pytest.raises(ValueError):
        Stc((AffineFn((1.0,)),), AffineFn((1.0,)), OR)
    with pytest.raises(ValueError):
        parking_gap_stc(0.0, 2.0)


def test_serialization_round_trip():
    s = parking_gap_stc(1.0, 2.0)
    assert Stc.from_dict(s.to_dict()) == s


def test_tightened_is_more_conservative():
    s = parking_gap_stc(1.0, 2.0)
    t = s.tightened(0.1)
    z = np.array([1.05, 2.05, 0.0])  # just outside the gap, just above the line
    assert residual(s, z) <= 0 < residual(t, z)
    assert s.tightened(0.0) is s
