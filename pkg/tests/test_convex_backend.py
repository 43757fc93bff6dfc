import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from parkscvx import convex_backend as cb
from parkscvx.convex_backend import Affine, ConicProblem, MalformedProblem, Status

DATA = Path(__file__).parent / "data"


def fixed(p, idx, value):
    p.add_equality(Affine.var(idx) - np.atleast_1d(value))


def test_variable_blocks():
    p = ConicProblem()
    assert cb.add_variable_block(p, 3) == range(0, 3)
    assert cb.add_variable_block(p, 2) == range(3, 5)
    with pytest.raises(ValueError):
        cb.add_variable_block(p, 0)


@pytest.mark.parametrize("value", [-2.0, 0.0])
def test_abs_epigraph_fixed(value):
    p = ConicProblem()
    e = p.add_variable_block(1)
    fixed(p, e, value)
    t = cb.add_abs_epigraph(p, Affine.var(e), 1.0)
    s = cb.solve(p)
    assert s.status is Status.OPTIMAL
    assert abs(s.v[t.start] - abs(value)) <= 1e-7


def test_abs_epigraph_coupled():
    # min |e| + (e - 3)^+ ... as an LP: min t + 0.5 * (1 - e)  s.t. t >= |e|, e <= 4 -> e = 0
    p = ConicProblem()
    e = p.add_variable_block(1)
    t = cb.add_abs_epigraph(p, Affine.var(e), 1.0)
    p.add_cost(Affine.var(e), -0.5)
    p.add_nonneg(4.0 - Affine.var(e))
    s = cb.solve(p)
    # 1-D analytic minimizer of |e| - e/2 on e <= 4 is e = 0
    assert abs(s.v[e.start]) <= 1e-7 and abs(s.v[t.start]) <= 1e-7


@pytest.mark.parametrize("y,norm", [((3.0, 4.0), 5.0), ((0.0, 0.0), 0.0)])
def test_soc_epigraph_fixed(y, norm):
    p = ConicProblem()
    v = p.add_variable_block(2)
    fixed(p, v, y)
    t = cb.add_soc_epigraph(p, Affine.var(v), 1.0)
    s = cb.solve(p)
    assert abs(s.v[t] - norm) <= 1e-6


def test_soc_epigraph_random(rng):
    for _ in range(5):
        y = rng.normal(size=4)
        p = ConicProblem()
        v = p.add_variable_block(4)
        fixed(p, v, y)
        t = cb.add_soc_epigraph(p, Affine.var(v), 1.0)
        assert abs(cb.solve(p).v[t] - np.linalg.norm(y)) <= 1e-6


@pytest.mark.parametrize("backend", ["clarabel", "cvxopt"])
def test_min_x_above_one(backend):
    p = ConicProblem()
    x = p.add_variable_block(1)
    p.add_cost(Affine.var(x))
    p.add_nonneg(Affine.var(x) - 1.0)
    s = cb.solve(p, backend)
    assert s.status is Status.OPTIMAL and abs(s.v[0] - 1) <= 1e-7 and abs(s.objective_value - 1) <= 1e-7


@pytest.mark.parametrize("backend", ["clarabel", "cvxopt"])
def test_infeasible(backend):
    p = ConicProblem()
    x = p.add_variable_block(1)
    p.add_nonneg(Affine.var(x) - 1.0)
    p.add_nonneg(-Affine.var(x))
    s = cb.solve(p, backend)
    assert s.status is Status.INFEASIBLE and s.v is None


def test_unbounded():
    p = ConicProblem()
    x = p.add_variable_block(1)
    p.add_cost(Affine.var(x))
    p.add_nonneg(1.0 - Affine.var(x))
    assert cb.solve(p).status is Status.UNBOUNDED


def vertex_optimum(c, G, h):
    """Brute force: best feasible intersection of any 3 active constraints of G x <= h."""
    best = np.inf
    for rows in itertools.combinations(range(G.shape[0]), 3):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            best = min(best, float(c @ x))
    return best


def test_random_lps_match_vertex_enumeration(rng):
    for _ in range(20):
        n_extra = 6
        G = np.vstack([np.eye(3), -np.eye(3), rng.normal(size=(n_extra, 3))])
        h = np.concatenate([np.full(6, 2.0), rng.uniform(0.5, 2.0, n_extra)])  # origin is feasible
        c = rng.normal(size=3)
        p = ConicProblem()
        x = p.add_variable_block(3)
        p.add_cost(Affine.linear(c[None, :], x))
        p.add_nonneg(Affine.linear(-G, x, h))
        s = cb.solve(p)
        assert s.status is Status.OPTIMAL
        assert abs(s.objective_value - vertex_optimum(c, G, h)) <= 1e-6


def test_malformed_rejected():
    p = ConicProblem()
    p.add_variable_block(2)
    p.add_nonneg(Affine.var([5]))
    with pytest.raises(MalformedProblem):
        cb.solve(p)
    p = ConicProblem()
    p.add_variable_block(1)
    with pytest.raises(MalformedProblem):
        p.add_soc(Affine.var([0, 0]), Affine.var([0]))
    with pytest.raises(ValueError):
        cb.solve(ConicProblem(), backend="nope")


def test_affine_row_mismatch():
    with pytest.raises(MalformedProblem):
        Affine.var([0, 1]) + Affine.var([0])


def test_residual_invariant_on_optimal(rng):
    p = ConicProblem.load_json(DATA / "conic_reverse_nominal.json")
    s = cb.solve(p)
    assert s.status is Status.OPTIMAL
    assert max(s.residuals.values()) <= 1e-6


def test_deterministic():
    p = ConicProblem.load_json(DATA / "conic_parallel_nominal.json")
    a, b = cb.solve(p), cb.solve(p)
    assert a.objective_value == b.objective_value
    np.testing.assert_array_equal(a.v, b.v)


def test_json_round_trip(tmp_path):
    p = ConicProblem.load_json(DATA / "conic_free_uturn.json")
    p.dump_json(tmp_path / "p.json")
    q = ConicProblem.load_json(tmp_path / "p.json")
    assert q.to_dict() == p.to_dict()
    assert cb.solve(q).objective_value == cb.solve(p).objective_value


MANIFEST = json.loads((DATA / "conic_regression.json").read_text())


@pytest.mark.parametrize("name", sorted(MANIFEST))
def test_regression_set_objective(name):
    entry = MANIFEST[name]
    p = ConicProblem.load_json(DATA / entry["file"])
    assert p.n_vars == entry["n_vars"]
    s = cb.solve(p)
    assert s.status is Status.OPTIMAL
    assert abs(s.objective_value - entry["objective"]) <= 1e-6 * max(1.0, abs(entry["objective"]))


def test_regression_set_size():
    assert len(MANIFEST) == 10
