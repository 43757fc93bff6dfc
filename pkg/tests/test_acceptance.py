"""Acceptance criteria 1-8, one test each, each printing a single verdict line."""

import itertools
import math
import time

import numpy as np
import pytest

from parkscvx import cli
from parkscvx import reeds_shepp as rs
from parkscvx import scenarios as sc
from parkscvx.discretization import discretize_foh, foh_integrate
from parkscvx.scvx_solver import ScvxParams, replay_trust_radius, scvx_run
from parkscvx.stc import OR, AffineFn, Stc, eta_star, residual
from parkscvx.vehicle_model import CarState, ModelParams, jacobians_batch

from test_discretization import foh_closed_form, lti_field, rs_like_reference
from test_vehicle_model import fd_jacobians

TOL = 1e-3
SEEDS = range(1, 11)


def parking_batch(build):
    rows = []
    for seed in SEEDS:
        s = sc.seeded(build(), seed)
        t0 = time.perf_counter()
        sol = scvx_run(s)
        elapsed = time.perf_counter() - t0
        rep = sc.validate_trajectory(sol, s)
        conv = sol.converged and sol.nu_norm < 1e-4
        rows.append((seed, conv, rep, elapsed))
    return rows


def summarize(rows):
    conv = [r for r in rows if r[1]]
    bad = [r[0] for r in conv if not r[2].ok(TOL)]
    cusps = max((r[2].cusps for r in conv), default=0)
    slowest = max(r[3] for r in rows)
    return len(conv), bad, cusps, slowest


def test_criterion_1_reverse_parking(criterion):
    s = sc.reverse_parking()
    assert ScvxParams(**s.params).K == 20 and s.y_bounds == (0.0, 5.0)
    rows = parking_batch(sc.reverse_parking)
    n, bad, cusps, slowest = summarize(rows)
    headings_ok = all(s.start_region.contains_heading(sc.seeded(s, k).P0.theta) for k in SEEDS)
    ok = n >= 8 and not bad and cusps >= 2 and slowest <= 30 and headings_ok
    criterion(1, ok, f"reverse: {n}/10 converged, invalid={bad}, max cusps={cusps}, slowest={slowest:.1f}s")


def test_criterion_2_parallel_parking(criterion):
    assert sc.BAY_WIDTH == 5.0
    n, bad, cusps, slowest = summarize(parking_batch(sc.parallel_parking))
    ok = n >= 8 and not bad and cusps >= 1 and slowest <= 30
    criterion(2, ok, f"parallel: {n}/10 converged, invalid={bad}, max cusps={cusps}, slowest={slowest:.1f}s")


def boundary_pairs(n=20, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < n:
        xy = rng.uniform(-6, 6, 2)
        th = rng.uniform(-math.pi, math.pi)
        if np.hypot(*xy) >= 3:
            pairs.append((CarState(0, 0, 0), CarState(xy[0], xy[1], th)))
    return pairs


def test_criterion_3_reeds_shepp_baseline(criterion):
    ratios, failed = [], []
    for q0, q1 in boundary_pairs():
        s = sc.free_space(q0, q1, model=ModelParams(1.0), params=sc.LENGTH_PARAMS)
        sol = scvx_run(s)
        rep = sc.validate_trajectory(sol, s)
        if not (sol.converged and rep.ok(TOL)):
            failed.append(tuple(np.round(np.asarray(q1), 3)))
            continue
        ratios.append(rep.rs_length / rs.shortest_path(q0, q1, 1.0).length)
    lo, hi = min(ratios, default=math.nan), max(ratios, default=math.nan)
    ok = not failed and len(ratios) == 20 and lo >= 1 - 1e-3 and hi <= 1.2
    criterion(3, ok, f"20 pairs, SCvx/RS length ratio in [{lo:.4f}, {hi:.4f}], unsolved={failed}")


def test_criterion_4_discretization(criterion):
    rng = np.random.default_rng(4)
    lti = 0.0
    for _ in range(10):
        A0, B0 = rng.normal(size=(3, 3)), rng.normal(size=(3, 2))
        dt = 1.0 / 19
        Ak, Bm, Bp, *_ = foh_integrate(np.zeros(3), np.zeros(2), np.zeros(2), 1.0, dt, lti_field(A0, B0))
        Phi, Bm_ref, Bp_ref = foh_closed_form(A0, B0, dt)
        lti = max(lti, np.abs(Ak[0] - Phi).max(), np.abs(Bm[0] - Bm_ref).max(), np.abs(Bp[0] - Bp_ref).max())
    ref = rs_like_reference(K=20)
    prop = np.abs(discretize_foh(ref).propagate(ref.states[0], ref.controls, ref.sigma) - ref.states).max()
    criterion(4, lti <= 1e-8 and prop <= 1e-6, f"LTI oracle error {lti:.2e}, K=20 propagation error {prop:.2e}")


def test_criterion_5_jacobians(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        x = rng.uniform([-10, -10, -2 * np.pi], [10, 10, 2 * np.pi])
        u, sigma = rng.uniform(-1, 1, 2), rng.uniform(0.1, 20)
        p = ModelParams(rng.uniform(0.2, 2.0))
        A, B, S, _ = jacobians_batch(x, u, sigma, p)
        Af, Bf, Sf = fd_jacobians(x, u, sigma, p)
        worst = max(worst, np.abs(A - Af).max(), np.abs(B - Bf).max(), np.abs(S - Sf).max())
    criterion(5, worst <= 1e-6, f"1000 finite-difference checks, max error {worst:.2e}")


def test_criterion_6_stc_logic(criterion):
    s = Stc((AffineFn((1.0, 0, 0)), AffineFn((0, 1.0, 0))), AffineFn((0, 0, 1.0)), OR)
    v = np.linspace(-1, 1, 21)
    Z = np.array(list(itertools.product(v, v, v)))
    implied = np.array([not (z[0] < 0 or z[1] < 0) or z[2] <= 0 for z in Z])
    mismatches = int(np.sum((residual(s, Z) <= 0) != implied))
    g = np.linspace(-1e3, 1e3, 100001)
    e = eta_star(g)
    nonzero = int(np.count_nonzero(e * (g + e)))
    ok = mismatches == 0 and nonzero == 0 and Z.shape[0] >= 1000
    criterion(6, ok, f"{Z.shape[0]}-point truth table mismatches={mismatches}, "
                     f"{g.size}-point complementarity nonzeros={nonzero}")


def test_criterion_7_scvx_behavior(criterion):
    s = sc.reverse_parking()
    p = ScvxParams(**s.params)
    sol = scvx_run(s, p)
    acc = [h["cost_candidate"] for h in sol.history if h["accepted"]]
    monotone = all(b <= a for a, b in zip(acc, acc[1:]))
    replay = replay_trust_radius(sol.history, p) == [h["trust_radius"] for h in sol.history]
    q = CarState(2.0, 3.0, 0.4)
    d = sc.free_space(q, q)
    dsol = scvx_run(d)
    dlen = sc.validate_trajectory(dsol, d).path_length
    ok = monotone and replay and dsol.converged and dsol.iterations <= 5 and dlen <= 1e-3
    criterion(7, ok, f"monotone={monotone} over {len(acc)} accepted steps, replay={replay}, "
                     f"degenerate: {dsol.iterations} iteration(s), length {dlen:.1e}")


def test_criterion_8_determinism(criterion, tmp_path):
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = cli.main(["plan", "reverse", "--seed", "3", "--format", "json", "--out", str(out)])
        assert code == 0
        blobs.append((out / "reverse_seed3.json").read_bytes())
    criterion(8, blobs[0] == blobs[1], f"two runs, artifacts of {len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}")
