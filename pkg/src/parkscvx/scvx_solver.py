"""Successive convexification over three stitched curve segments.

Each iteration linearizes the car dynamics about the current reference,
discretizes with first-order hold, and solves one SOCP in scaled variables with
virtual control, a hard l1 trust region and linearized state-triggered
constraints. The step is accepted or rejected by comparing the actual decrease
of the nonlinear penalized cost against the decrease predicted by the convex
model.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import convex_backend as cb
from . import stc as stc_mod
from .convex_backend import Affine
from .discretization import (LtvSystem, ScalingTransform, apply_scaling, discretize_many,
                             invert_scaling, make_scaling)
from .vehicle_model import ModelParams

log = logging.getLogger(__name__)

N_SEGMENTS = 3
NX, NU = 3, 2


@dataclass
class ScvxParams:
    K: int = 20
    max_iters: int = 50
    w_sigma: float = 1.0
    w_nu: float = 1e5
    w_jerk: float = 0.1
    w_length: float = 0.0
    length_norm: str = "l1"  # "l1": |dx| + |dy| per step, "l2": ||(dx, dy)||
    rho_tr0: float = 1.0
    rho0: float = 0.0
    rho1: float = 0.25
    rho2: float = 0.7
    alpha_shrink: float = 2.0
    alpha_grow: float = 2.0
    tr_min: float = 1e-6
    tr_max: float = 10.0
    eps_step: float = 1e-4
    eps_nu: float = 1e-4
    sigma_min: float = 0.1
    sigma_max: float = 60.0
    steer_continuity: bool = False
    substeps: int = 16
    # interior samples per interval where STCs and bounds are also imposed
    n_sub: int = 3
    # STC tightening used while planning; validation always uses the true STC
    stc_margin: float = 0.0
    backend: str = "clarabel"

    def __post_init__(self):
        if not 0 <= self.rho0 < self.rho1 < self.rho2 < 1:
            raise ValueError("need 0 <= rho0 < rho1 < rho2 < 1")
        if not (self.alpha_shrink > 1 and self.alpha_grow > 1):
            raise ValueError("trust-region factors must exceed 1")
        if min(self.w_sigma, self.w_jerk, self.w_length) < 0 or not self.w_nu > 0:
            raise ValueError("weights must be nonnegative and w_nu positive")
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("bad sigma bounds")
        if self.length_norm not in ("l1", "l2", "rs"):
            raise ValueError("length_norm must be 'l1', 'l2' or 'rs'")


@dataclass
class SegmentTrajectory:
    states: np.ndarray  # (K, 3)
    controls: np.ndarray  # (K, 2)
    sigma: float

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        self.sigma = float(self.sigma)
        if self.states.shape[0] < 2 or self.states.shape != (self.K, NX) or self.controls.shape != (self.K, NU):
            raise ValueError("segment needs K >= 2 knots of 3 states and 2 controls")
        if not self.sigma > 0:
            raise ValueError("segment sigma must be positive")

    @property
    def K(self) -> int:
        return self.states.shape[0]

    @property
    def tau(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.K)


@dataclass
class MultiSegmentSolution:
    segments: list
    virtual_controls: list  # per segment (K-1, 3), scaled state units
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)
    status: str = "init"
    scaling: Optional[ScalingTransform] = None

    @property
    def nu_norm(self) -> float:
        return float(sum(np.abs(v).sum() for v in self.virtual_controls))

    @property
    def duration(self) -> float:
        return float(sum(s.sigma for s in self.segments))

    def knots(self) -> np.ndarray:
        return np.concatenate([s.states for s in self.segments])

    def controls(self) -> np.ndarray:
        return np.concatenate([s.controls for s in self.segments])

    def history_jsonl(self) -> str:
        return "".join(json.dumps(h, sort_keys=True) + "\n" for h in self.history)


class ScvxError(RuntimeError):
    """The convex backend failed; the partial run is attached."""

    def __init__(self, msg, solution: MultiSegmentSolution):
        super().__init__(msg)
        self.solution = solution
        self.history = solution.history


# ---------------------------------------------------------------------------


def initialize_segments(P0, P1, params: ScvxParams) -> list:
    """Straight-line initial guess split into three equal pieces, zero controls."""
    P0 = np.asarray(P0, dtype=float)
    P1 = np.asarray(P1, dtype=float)
    K = params.K
    piece = np.linalg.norm(P1[:2] - P0[:2]) / N_SEGMENTS
    sigma = float(np.clip(piece / 0.5, params.sigma_min, params.sigma_max))
    segs = []
    for i in range(N_SEGMENTS):
        a = P0 + (P1 - P0) * i / N_SEGMENTS
        b = P0 + (P1 - P0) * (i + 1) / N_SEGMENTS
        s = np.linspace(0.0, 1.0, K)[:, None]
        segs.append(SegmentTrajectory((1 - s) * a + s * b, np.zeros((K, NU)), sigma))
    return segs


def scaling_for(scenario, params: ScvxParams) -> ScalingTransform:
    P0 = np.asarray(scenario.P0, dtype=float)
    P1 = np.asarray(scenario.P1, dtype=float)
    if scenario.x_bounds is not None:
        xlo, xhi = scenario.x_bounds
    else:
        xlo, xhi = min(P0[0], P1[0]) - 3.0, max(P0[0], P1[0]) + 3.0
    if scenario.y_bounds is not None:
        ylo, yhi = scenario.y_bounds
    else:
        ylo, yhi = min(P0[1], P1[1]) - 3.0, max(P0[1], P1[1]) + 3.0
    tlo = min(P0[2], P1[2]) - np.pi
    thi = max(P0[2], P1[2]) + np.pi
    return make_scaling(([xlo, ylo, tlo], [xhi, yhi, thi]), ([-1.0, -1.0], [1.0, 1.0]),
                        (params.sigma_min, params.sigma_max))


@dataclass
class Subproblem:
    problem: cb.ConicProblem
    X: list  # per segment (K, 3) variable indices
    U: list
    s: list  # per segment sigma index
    V: list  # per segment (K-1, 3)
    slack: np.ndarray  # STC slack indices
    terms: dict  # name -> (indices, weights) for cost breakdown


def _planning_stcs(scenario, params):
    return [s.tightened(params.stc_margin) for s in scenario.stcs]


def _sample_points(traj: SegmentTrajectory, ltv: LtvSystem) -> np.ndarray:
    """Physical states at knots followed by interior samples, shape (K + (K-1) n_sub, 3)."""
    pts = [traj.states]
    if ltv.sub is not None:
        pts.append(ltv.sub.x_ref.reshape(-1, NX))
    return np.concatenate(pts)


def build_subproblem(ref: list, ltv: list, scenario, tr: float, scaling: ScalingTransform,
                     params: ScvxParams) -> Subproblem:
    """Assemble the convex subproblem about ``ref`` (three segments, physical LTVs)."""
    if len(ref) != N_SEGMENTS or len(ltv) != N_SEGMENTS:
        raise ValueError(f"expected {N_SEGMENTS} segments")
    K = ref[0].K
    for r, l in zip(ref, ltv):
        if r.K != K or l.K != K:
            raise ValueError("segment / LTV knot count mismatch")
    t = scaling
    dx = np.diag(t.D_x)
    p = cb.ConicProblem()
    X, U, S, V = [], [], [], []
    for _ in range(N_SEGMENTS):
        X.append(np.array(p.add_variable_block(K * NX)).reshape(K, NX))
        U.append(np.array(p.add_variable_block(K * NU)).reshape(K, NU))
        S.append(p.add_variable_block(1).start)
        V.append(np.array(p.add_variable_block((K - 1) * NX)).reshape(K - 1, NX))
    terms = {}

    scaled = [apply_scaling(t, l) for l in ltv]

    # (a) dynamics with virtual control
    for i in range(N_SEGMENTS):
        p.add_equality(_dynamics_rows(scaled[i], X[i], U[i], S[i], V[i]))

    # (b) cost
    sig_idx = np.array(S)
    p.add_cost(Affine.var(sig_idx), params.w_sigma)
    terms["sigma"] = ("lin", sig_idx, params.w_sigma)
    nu_t = cb.add_abs_epigraph(p, Affine.var(np.concatenate([v.ravel() for v in V])), params.w_nu)
    terms["nu"] = ("lin", np.array(nu_t), params.w_nu)
    if params.w_jerk > 0:
        jt = []
        for i in range(N_SEGMENTS):
            for j in range(NU):
                y = Affine.var(U[i][1:, j]) - Affine.var(U[i][:-1, j])
                jt.append(cb.add_soc_epigraph(p, y, params.w_jerk))
        terms["jerk"] = ("lin", np.array(jt), params.w_jerk)
    if params.w_length > 0:
        lt = []
        for i in range(N_SEGMENTS):
            d = [Affine.var(X[i][1:, j]) - Affine.var(X[i][:-1, j]) for j in (0, 1)]
            if params.length_norm == "rs":
                lt.append(_rs_length_row(p, U[i], S[i], ref[i], t, params.w_length))
            elif params.length_norm == "l1":
                lt += list(cb.add_abs_epigraph(p, cb.vstack(d), params.w_length))
            else:
                for k in range(K - 1):
                    lt.append(cb.add_soc_epigraph(p, cb.vstack([d[0].take(k), d[1].take(k)]), params.w_length))
        terms["length"] = ("lin", np.array(lt), params.w_length)

    # (c) boundary, continuity and speed joints
    P0h = apply_scaling(t, np.asarray(scenario.P0, dtype=float))
    P1h = apply_scaling(t, np.asarray(scenario.P1, dtype=float))
    p.add_equality(Affine.var(X[0][0]) - P0h)
    p.add_equality(Affine.var(X[-1][-1]) - P1h)
    for i in range(N_SEGMENTS - 1):
        p.add_equality(Affine.var(X[i][-1]) - Affine.var(X[i + 1][0]))
    zero_u1 = float(apply_scaling(t, np.zeros(NU), "control")[0])
    joint = [U[0][-1, 0]] + [U[i][k, 0] for i in range(1, N_SEGMENTS) for k in (0, -1)]
    p.add_equality(Affine.var(joint) - zero_u1)
    if params.steer_continuity:
        for i in range(N_SEGMENTS - 1):
            p.add_equality(Affine.var([U[i][-1, 1]]) - Affine.var([U[i + 1][0, 1]]))

    # (d) control box, (h) sigma bounds
    ulo = apply_scaling(t, -np.ones(NU), "control")
    uhi = apply_scaling(t, np.ones(NU), "control")
    Uall = np.concatenate([u for u in U])
    for j in range(NU):
        p.add_nonneg(Affine.var(Uall[:, j]) - ulo[j])
        p.add_nonneg(uhi[j] - Affine.var(Uall[:, j]))
    slo = float(apply_scaling(t, params.sigma_min, "sigma"))
    shi = float(apply_scaling(t, params.sigma_max, "sigma"))
    p.add_nonneg(Affine.var(sig_idx) - slo)
    p.add_nonneg(shi - Affine.var(sig_idx))

    # (e) position bounds and (f) linearized STCs, at knots and interior samples
    pts = [_point_exprs(scaled[i], X[i], U[i], S[i]) for i in range(N_SEGMENTS)]
    bounds = []
    if scenario.x_bounds is not None:
        bounds.append((0, scenario.x_bounds))
    if scenario.y_bounds is not None:
        bounds.append((1, scenario.y_bounds))
    for comp, (lo, hi) in bounds:
        lo_h = (lo - t.C_x[comp]) / dx[comp]
        hi_h = (hi - t.C_x[comp]) / dx[comp]
        for e in pts:
            row = e[comp]
            p.add_nonneg(row - lo_h)
            p.add_nonneg(hi_h - row)

    slack_idx = []
    stcs = _planning_stcs(scenario, params)
    for i in range(N_SEGMENTS):
        zbar = _sample_points(ref[i], ltv[i])
        for s in stcs:
            h_bar, grad = stc_mod.linearize(s, zbar)
            live = np.nonzero(np.any(grad != 0.0, axis=1) | (h_bar != 0.0))[0]
            if live.size == 0:
                continue
            sl = np.array(p.add_variable_block(live.size))
            slack_idx.append(sl)
            # h_lin = h_bar + grad . (D xh + C - zbar) <= slack
            g = grad[live]
            const = h_bar[live] + g @ t.C_x - np.einsum("ij,ij->i", g, zbar[live])
            expr = Affine.constant(const)
            for c in range(NX):
                expr = expr + _scale_rows(pts[i][c].take(live), g[:, c] * dx[c])
            p.add_nonneg(Affine.var(sl) - expr)
            p.add_nonneg(Affine.var(sl))
    slack_idx = np.concatenate(slack_idx) if slack_idx else np.zeros(0, dtype=np.int64)
    if slack_idx.size:
        p.add_cost(Affine.var(slack_idx), params.w_nu)
    terms["stc"] = ("lin", slack_idx, params.w_nu)

    # (g) l1 trust region per knot: |dx| + |du| + |dsigma| <= tr
    for i in range(N_SEGMENTS):
        xr = apply_scaling(t, ref[i].states)
        ur = apply_scaling(t, ref[i].controls, "control")
        sr = float(apply_scaling(t, ref[i].sigma, "sigma"))
        dxu = cb.vstack([Affine.var(X[i].ravel()) - xr.ravel(), Affine.var(U[i].ravel()) - ur.ravel()])
        tx = np.array(cb.add_abs_epigraph(p, dxu))
        ts = cb.add_abs_epigraph(p, Affine.var([S[i]]) - sr).start
        tx_x = tx[: K * NX].reshape(K, NX)
        tx_u = tx[K * NX:].reshape(K, NU)
        cols = np.concatenate([tx_x, tx_u, np.full((K, 1), ts)], axis=1)
        rows = np.repeat(np.arange(K), NX + NU + 1)
        budget = Affine(rows, cols.ravel(), -np.ones(cols.size), np.full(K, tr))
        p.add_nonneg(budget)

    return Subproblem(p, X, U, S, V, slack_idx, terms)


def _scale_rows(e: Affine, w) -> Affine:
    w = np.asarray(w, dtype=float)
    return Affine(e.rows, e.cols, e.vals * w[e.rows], e.const * w)


def _dynamics_rows(l: LtvSystem, X, U, s, V) -> Affine:
    """Rows of ``x[k+1] - (A x[k] + Bm u[k] + Bp u[k+1] + S sigma + w) - nu[k] = 0``."""
    n = l.A.shape[0]
    r = np.arange(n * NX).reshape(n, NX)
    rows = [r.ravel(), np.broadcast_to(r[:, :, None], (n, NX, NX)).ravel(),
            np.broadcast_to(r[:, :, None], (n, NX, NU)).ravel(),
            np.broadcast_to(r[:, :, None], (n, NX, NU)).ravel(), r.ravel(), r.ravel()]
    cols = [X[1:].ravel(), np.broadcast_to(X[:-1][:, None, :], (n, NX, NX)).ravel(),
            np.broadcast_to(U[:-1][:, None, :], (n, NX, NU)).ravel(),
            np.broadcast_to(U[1:][:, None, :], (n, NX, NU)).ravel(), np.full(n * NX, s), V.ravel()]
    vals = [np.ones(n * NX), -l.A.ravel(), -l.B_minus.ravel(), -l.B_plus.ravel(), -l.S.ravel(),
            -np.ones(n * NX)]
    return Affine(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), -l.w.ravel())


def _point_exprs(l: LtvSystem, X, U, s) -> list:
    """Scaled state at knots and interior samples as affine rows, one block per state component."""
    K = X.shape[0]
    out = []
    for c in range(NX):
        blocks = [Affine.var(X[:, c])]
        if l.sub is not None:
            m = l.sub
            n, ns = m.Ax.shape[:2]
            nr = n * ns
            r = np.arange(nr).reshape(n, ns)
            rows = [np.broadcast_to(r[:, :, None], (n, ns, NX)).ravel(),
                    np.broadcast_to(r[:, :, None], (n, ns, NU)).ravel(),
                    np.broadcast_to(r[:, :, None], (n, ns, NU)).ravel(), r.ravel()]
            cols = [np.broadcast_to(X[:-1][:, None, :], (n, ns, NX)).ravel(),
                    np.broadcast_to(U[:-1][:, None, :], (n, ns, NU)).ravel(),
                    np.broadcast_to(U[1:][:, None, :], (n, ns, NU)).ravel(), np.full(nr, s)]
            vals = [m.Ax[:, :, c, :].ravel(), m.Bm[:, :, c, :].ravel(), m.Bp[:, :, c, :].ravel(),
                    m.S[:, :, c].ravel()]
            blocks.append(Affine(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                                 m.w[:, :, c].ravel()))
        out.append(cb.vstack(blocks))
    return out


# ---------------------------------------------------------------------------


def trust_region_update(predicted_decrease: float, actual_decrease: float, tr: float,
                        params: ScvxParams = ScvxParams()):
    """Ratio test. Returns ``(accept, new_tr, ratio)``."""
    if not predicted_decrease > 0:
        return False, float(np.clip(tr / params.alpha_shrink, params.tr_min, params.tr_max)), float("nan")
    r = actual_decrease / predicted_decrease
    if r < params.rho0:
        accept, new = False, tr / params.alpha_shrink
    elif r < params.rho1:
        accept, new = True, tr / params.alpha_shrink
    elif r < params.rho2:
        accept, new = True, tr
    else:
        accept, new = True, tr * params.alpha_grow
    return accept, float(np.clip(new, params.tr_min, params.tr_max)), float(r)


@dataclass
class _Eval:
    """A reference trajectory with its discretization and nonlinear cost."""

    segs: list
    ltv: list
    cost: float
    terms: dict
    defect: float
    stc_violation: float


def _evaluate(segs, scenario, params, scaling) -> _Eval:
    ltv = discretize_many(segs, scenario.model, params.substeps, params.n_sub)
    t = scaling
    dx = np.diag(t.D_x)
    terms = {}
    terms["sigma"] = params.w_sigma * sum(float(apply_scaling(t, s.sigma, "sigma")) for s in segs)
    defect = sum(float(np.abs((l.x_prop - s.states[1:]) / dx).sum()) for s, l in zip(segs, ltv))
    terms["nu"] = params.w_nu * defect
    terms["jerk"] = params.w_jerk * sum(
        float(np.linalg.norm(np.diff(apply_scaling(t, s.controls, "control")[:, j])))
        for s in segs for j in range(NU))
    if params.length_norm == "rs":
        terms["length"] = params.w_length * sum(s.sigma * _speed_integral(s.controls) for s in segs)
    else:
        terms["length"] = params.w_length * sum(_scaled_length(apply_scaling(t, s.states), params.length_norm)
                                                for s in segs)
    viol = 0.0
    for s, l in zip(segs, ltv):
        pts = _sample_points(s, l)
        for c in _planning_stcs(scenario, params):
            viol += float(np.maximum(stc_mod.residual(c, pts), 0.0).sum())
    terms["stc"] = params.w_nu * viol
    return _Eval(segs, ltv, float(sum(terms.values())), terms, defect, viol)


def _trapezoid_weights(K):
    w = np.full(K, 1.0 / (K - 1))
    w[[0, -1]] *= 0.5
    return w


def _speed_integral(controls) -> float:
    """Trapezoid estimate of the integral over tau of max(|u1|, |u2|)."""
    m = np.abs(np.asarray(controls, dtype=float)).max(axis=1)
    return float(_trapezoid_weights(len(m)) @ m)


def _rs_length_row(p, U, s_idx, ref: SegmentTrajectory, t: ScalingTransform, weight) -> int:
    """Epigraph variable for the linearized ``sigma * int max(|u1|, |u2|)``.

    The bilinear product is replaced by ``sb * m(u) + (sigma - sb) * m(ub)``,
    which is convex in ``u``, affine in ``sigma`` and exact at the reference.
    """
    K = ref.K
    m = np.array(p.add_variable_block(K))
    for j in range(NU):
        uj = _scale_rows(Affine.var(U[:, j]), np.full(K, t.D_u[j, j])) + t.C_u[j]
        p.add_nonneg(Affine.var(m) - uj)
        p.add_nonneg(Affine.var(m) + uj)
    z = p.add_variable_block(1).start
    m_ref = _speed_integral(ref.controls)
    w = _trapezoid_weights(K) * ref.sigma
    cols = np.concatenate([m, [s_idx, z]])
    vals = np.concatenate([w, [m_ref * t.sigma_scale, -1.0]])
    const = m_ref * (t.sigma_center - ref.sigma)
    p.add_equality(Affine(np.zeros(cols.size, dtype=np.int64), cols, vals, np.array([const])))
    p.add_cost(Affine.var([z]), weight)
    return z


def _scaled_length(xh, norm):
    d = np.diff(xh[:, :2], axis=0)
    if norm == "l1":
        return float(np.abs(d).sum())
    return float(np.linalg.norm(d, axis=1).sum())


def _extract(sub: Subproblem, v, scaling, params):
    t = scaling
    segs, nus = [], []
    for i in range(N_SEGMENTS):
        x = invert_scaling(t, v[sub.X[i]])
        u = invert_scaling(t, v[sub.U[i]], "control")
        sig = float(invert_scaling(t, v[sub.s[i]], "sigma"))
        sig = max(sig, params.sigma_min * (1 - 1e-9))
        segs.append(SegmentTrajectory(x, np.clip(u, -1.0, 1.0), sig))
        nus.append(v[sub.V[i]].copy())
    return segs, nus


def _step_norm(a: list, b: list, scaling) -> float:
    t = scaling
    worst = 0.0
    for sa, sb in zip(a, b):
        d = np.abs(apply_scaling(t, sa.states) - apply_scaling(t, sb.states)).sum(axis=1)
        d = d + np.abs(apply_scaling(t, sa.controls, "control") - apply_scaling(t, sb.controls, "control")).sum(axis=1)
        d = d + abs(float(apply_scaling(t, sa.sigma, "sigma") - apply_scaling(t, sb.sigma, "sigma")))
        worst = max(worst, float(d.max()))
    return worst


def _linear_terms(sub: Subproblem, v) -> dict:
    return {k: float(w * v[idx].sum()) if len(idx) else 0.0 for k, (_, idx, w) in sub.terms.items()}


def scvx_run(scenario, params: Optional[ScvxParams] = None, initial: Optional[list] = None) -> MultiSegmentSolution:
    """Run SCvx until the step and virtual control vanish or ``max_iters`` is hit."""
    if params is None:
        params = ScvxParams(**getattr(scenario, "params", {}))
    scaling = scaling_for(scenario, params)
    segs = initial if initial is not None else initialize_segments(scenario.P0, scenario.P1, params)
    ref = _evaluate(segs, scenario, params, scaling)
    tr = params.rho_tr0
    history = []
    sol = MultiSegmentSolution(ref.segs, [np.zeros((params.K - 1, NX)) for _ in range(N_SEGMENTS)],
                               history=history, scaling=scaling)
    for it in range(1, params.max_iters + 1):
        sub = build_subproblem(ref.segs, ref.ltv, scenario, tr, scaling, params)
        res = cb.solve(sub.problem, params.backend)
        if res.status is not cb.Status.OPTIMAL:
            history.append({"iteration": it, "status": res.status.value, "trust_radius": tr})
            sol.iterations = it
            sol.status = "backend_" + res.status.value
            raise ScvxError(f"convex subproblem returned {res.status.value} at iteration {it}", sol)
        cand_segs, nus = _extract(sub, res.v, scaling, params)
        lin_terms = _linear_terms(sub, res.v)
        L = res.objective_value
        cand = _evaluate(cand_segs, scenario, params, scaling)
        step = _step_norm(cand_segs, ref.segs, scaling)
        nu_norm = float(sum(np.abs(n).sum() for n in nus))
        slack = float(res.v[sub.slack].sum()) if sub.slack.size else 0.0
        predicted = ref.cost - L
        actual = ref.cost - cand.cost
        done = step < params.eps_step and nu_norm < params.eps_nu and slack < params.eps_nu
        if done:
            accept, new_tr, ratio = actual >= 0, tr, (actual / predicted if predicted > 0 else float("nan"))
        else:
            accept, new_tr, ratio = trust_region_update(predicted, actual, tr, params)
        history.append({
            "iteration": it,
            "status": res.status.value,
            "trust_radius": tr,
            "new_trust_radius": new_tr,
            "accepted": bool(accept),
            "ratio": ratio,
            "predicted_decrease": predicted,
            "actual_decrease": actual,
            "cost_ref": ref.cost,
            "cost_linear": L,
            "cost_candidate": cand.cost,
            "cost_terms": cand.terms,
            "linear_terms": lin_terms,
            "nu_l1": nu_norm,
            "stc_slack": slack,
            "defect_l1": cand.defect,
            "step_norm": step,
            "duration": float(sum(s.sigma for s in cand_segs)),
        })
        log.debug("it %d cost %.6g -> %.6g (L %.6g) nu %.2e step %.2e tr %.3g %s", it, ref.cost, cand.cost,
                  L, nu_norm, step, tr, "acc" if accept else "rej")
        if accept:
            ref = cand
            sol.virtual_controls = nus
        tr = new_tr
        sol.segments = ref.segs
        sol.iterations = it
        if done:
            sol.converged = True
            sol.status = "converged"
            return sol
    sol.status = "max_iters"
    return sol


def penalized_cost(segs, scenario, params: ScvxParams, scaling=None) -> float:
    """Nonlinear penalized cost used by the ratio test."""
    scaling = scaling or scaling_for(scenario, params)
    return _evaluate(segs, scenario, params, scaling).cost


def replay_trust_radius(history: list, params: ScvxParams) -> list:
    """Recompute the trust-radius trace from recorded decreases."""
    tr = params.rho_tr0
    out = []
    for h in history:
        out.append(tr)
        if "predicted_decrease" not in h:
            break
        converged_step = (h["step_norm"] < params.eps_step and h["nu_l1"] < params.eps_nu
                          and h["stc_slack"] < params.eps_nu)
        if not converged_step:
            _, tr, _ = trust_region_update(h["predicted_decrease"], h["actual_decrease"], tr, params)
    return out


def params_with(params: ScvxParams, **overrides) -> ScvxParams:
    return replace(params, **overrides)


def params_to_dict(params: ScvxParams) -> dict:
    return asdict(params)
