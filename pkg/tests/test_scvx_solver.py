import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parkscvx import convex_backend as cb
from parkscvx import scenarios as sc
from parkscvx.discretization import integrate_segment
from parkscvx.scvx_solver import (
    ScvxParams, _evaluate, build_subproblem, initialize_segments, penalized_cost,
    replay_trust_radius, scaling_for, scvx_run, trust_region_update,
)
from parkscvx.vehicle_model import CarState

PI = math.pi
HISTORY_KEYS = {"iteration", "status", "trust_radius", "new_trust_radius", "accepted", "ratio",
                "predicted_decrease", "actual_decrease", "cost_ref", "cost_linear", "cost_candidate",
                "cost_terms", "linear_terms", "nu_l1", "stc_slack", "defect_l1", "step_norm", "duration"}


@pytest.fixture(scope="module")
def reverse_run():
    s = sc.reverse_parking()
    return s, scvx_run(s)


@pytest.fixture(scope="module")
def u_turn_run():
    s = sc.free_space(CarState(3, 0, 0), CarState(0, 0, PI), params=sc.PARKING_PARAMS)
    return s, scvx_run(s)


def test_initialize_straight_line():
    segs = initialize_segments(CarState(0, 0, 0), CarState(3, 0, 0), ScvxParams(K=5))
    assert [s.states[-1, 0] for s in segs] == pytest.approx([1, 2, 3])
    assert [s.states[0, 0] for s in segs] == pytest.approx([0, 1, 2])
    assert all(np.all(s.controls == 0) for s in segs)
    assert len({s.sigma for s in segs}) == 1


def test_initialize_mid_knot():
    segs = initialize_segments(CarState(0, 0, 0), CarState(6, 3, PI), ScvxParams(K=3))
    assert segs[1].states[1] == pytest.approx([3, 1.5, PI / 2])


def test_initialize_degenerate():
    p = ScvxParams(K=4)
    segs = initialize_segments(CarState(1, 2, 0.3), CarState(1, 2, 0.3), p)
    for s in segs:
        assert np.allclose(s.states, [1, 2, 0.3])
        assert s.sigma == p.sigma_min


@pytest.mark.parametrize("ratio,accept,factor", [(0.5, True, 1), (-1, False, 0.5), (0.9, True, 2),
                                                 (0.1, True, 0.5), (0.25, True, 1), (0.7, True, 2)])
def test_trust_region_examples(ratio, accept, factor):
    a, tr, r = trust_region_update(1.0, ratio, 0.4)
    assert a is accept and tr == pytest.approx(0.4 * factor) and r == ratio


def test_trust_region_nonpositive_prediction():
    for pred in (0.0, -1e-3):
        a, tr, r = trust_region_update(pred, 1.0, 0.4)
        assert not a and tr == pytest.approx(0.2) and math.isnan(r)


@given(st.floats(-1e3, 1e3), st.floats(1e-6, 1e3), st.floats(1e-6, 10))
def test_trust_region_clamped(actual, pred, tr):
    p = ScvxParams()
    a, new, r = trust_region_update(pred, actual, tr, p)
    assert p.tr_min <= new <= p.tr_max
    assert a == (r >= p.rho0)


def test_params_validation():
    for bad in ({"rho1": 0.8}, {"alpha_shrink": 1.0}, {"w_nu": 0}, {"K": 1}, {"sigma_min": 0},
                {"length_norm": "l3"}, {"w_sigma": -1}):
        with pytest.raises(ValueError):
            ScvxParams(**bad)


def test_variable_count_k3():
    s = sc.free_space(CarState(0, 0, 0), CarState(3, 0, 0))
    p = ScvxParams(K=3)
    t = scaling_for(s, p)
    ref = _evaluate(initialize_segments(s.P0, s.P1, p), s, p, t)
    sub = build_subproblem(ref.segs, ref.ltv, s, 1.0, t, p)
    per_seg = 3 * 3 + 3 * 2 + 1 + 2 * 3  # states, controls, sigma, virtual control
    nu_abs = 2 * 3
    tr_abs = 3 * 3 + 3 * 2 + 1
    expected = 3 * (per_seg + nu_abs + tr_abs) + 3 * 2  # plus one jerk epigraph per control channel
    assert expected == 138
    assert sub.problem.n_vars == expected
    assert sub.slack.size == 0


def test_zero_trust_region_pins_reference():
    s = sc.reverse_parking()
    p = ScvxParams(K=6)
    t = scaling_for(s, p)
    ref = _evaluate(initialize_segments(s.P0, s.P1, p), s, p, t)
    sub = build_subproblem(ref.segs, ref.ltv, s, 1e-9, t, p)
    res = cb.solve(sub.problem)
    assert res.status is cb.Status.OPTIMAL
    from parkscvx.scvx_solver import _extract, _step_norm
    segs, _ = _extract(sub, res.v, t, p)
    assert _step_norm(segs, ref.segs, t) < 1e-6


def test_u_turn_converges_with_cusp(u_turn_run):
    s, sol = u_turn_run
    assert sol.converged
    r = sc.validate_trajectory(sol, s)
    assert r.ok(1e-3) and r.cusps >= 1


def test_reverse_keeps_clearance(reverse_run):
    s, sol = reverse_run
    assert sol.converged
    x = sol.knots()
    outside = np.abs(x[:, 0]) > sc.GAP_HALF_WIDTH
    assert np.all(x[outside, 1] >= sc.CLEARANCE - 1e-3)


def test_solution_structure(reverse_run):
    s, sol = reverse_run
    segs = sol.segments
    assert np.allclose(segs[0].states[0], np.asarray(s.P0), atol=1e-6)
    end = segs[-1].states[-1]
    assert np.allclose(end[:2], np.asarray(s.P1)[:2], atol=1e-6)
    for a, b in zip(segs, segs[1:]):
        assert np.allclose(a.states[-1], b.states[0], atol=1e-6)
    joints = [segs[0].controls[-1, 0]] + [g.controls[k, 0] for g in segs[1:] for k in (0, -1)]
    assert np.allclose(joints, 0, atol=1e-6)
    assert np.all(np.abs(sol.controls()) <= 1 + 1e-6)
    assert sol.nu_norm < 1e-4
    for g in segs:
        assert ScvxParams().sigma_min - 1e-9 <= g.sigma


def test_open_loop_matches_knots(reverse_run):
    _, sol = reverse_run
    x = np.asarray(sol.segments[0].states[0])
    for g in sol.segments:
        dense = integrate_segment(x, g.controls, g.sigma, sc.reverse_parking().model)
        assert np.allclose(dense[-1], g.states[-1], atol=1e-3)
        x = g.states[-1]


def test_history(reverse_run):
    s, sol = reverse_run
    h = sol.history
    assert len(h) == sol.iterations
    assert all(HISTORY_KEYS <= set(r) for r in h)
    accepted = [r["cost_candidate"] for r in h if r["accepted"]]
    assert all(b <= a + 1e-9 for a, b in zip(accepted, accepted[1:]))
    p = ScvxParams(**s.params)
    assert replay_trust_radius(h, p) == pytest.approx([r["trust_radius"] for r in h])
    assert sol.history_jsonl().count("\n") == len(h)
    assert penalized_cost(sol.segments, s, p) == pytest.approx(h[-1]["cost_candidate"] if h[-1]["accepted"]
                                                               else h[-1]["cost_ref"])


def test_degenerate_problem():
    q = CarState(1, 1, 0.5)
    s = sc.free_space(q, q)
    sol = scvx_run(s)
    assert sol.converged and sol.iterations <= 5
    r = sc.validate_trajectory(sol, s)
    assert r.path_length == pytest.approx(0, abs=1e-6)


def test_deterministic():
    s = sc.free_space(CarState(0, 0, 0), CarState(2, 1, 0.5), params={"K": 8})
    a, b = scvx_run(s), scvx_run(s)
    assert a.history_jsonl() == b.history_jsonl()
