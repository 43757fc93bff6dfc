"""Parking scenarios, start-pose sampling and dense trajectory validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .discretization import integrate_segment
from .stc import Stc, parking_gap_stc, residual
from .vehicle_model import CarState, ModelParams

SCHEMA = "parkscvx.scenario/1"
# |u1| below this is treated as stopped when counting direction reversals
CUSP_SPEED_TOL = 1e-3


@dataclass(frozen=True)
class StartRegion:
    x: tuple
    y: tuple
    headings_deg: tuple  # union of closed intervals in degrees

    def __post_init__(self):
        if self.x[1] < self.x[0] or self.y[1] < self.y[0]:
            raise ValueError("inverted start-region box")
        if not self.headings_deg:
            raise ValueError("empty heading set")
        for lo, hi in self.headings_deg:
            if hi < lo:
                raise ValueError("inverted heading interval")

    def contains_heading(self, theta: float) -> bool:
        deg = math.degrees(theta)
        return any(lo - 1e-9 <= deg <= hi + 1e-9 for lo, hi in self.headings_deg)

    def to_dict(self) -> dict:
        return {"x": list(self.x), "y": list(self.y), "headings_deg": [list(h) for h in self.headings_deg]}

    @classmethod
    def from_dict(cls, d) -> "StartRegion":
        return cls(tuple(d["x"]), tuple(d["y"]), tuple(tuple(h) for h in d["headings_deg"]))


@dataclass(frozen=True)
class Scenario:
    name: str
    P0: CarState
    P1: CarState
    stcs: tuple = ()
    y_bounds: Optional[tuple] = None
    x_bounds: Optional[tuple] = None
    model: ModelParams = ModelParams()
    params: dict = field(default_factory=dict)  # ScvxParams overrides
    start_region: Optional[StartRegion] = None
    seed: Optional[int] = None

    def __post_init__(self):
        for which, q in (("start", self.P0), ("goal", self.P1)):
            bad = point_violation(self, np.asarray(q)[None, :])
            if bad > 1e-9:
                raise ValueError(f"{which} pose {q} violates the scenario constraints by {bad:.3g}")

    def with_start(self, P0: CarState, seed: Optional[int] = None) -> "Scenario":
        """New start pose; the goal heading is shifted by 2 pi to the copy nearest the start heading."""
        return replace(self, P0=P0, P1=nearest_heading(self.P1, P0.theta), seed=seed)

    def to_dict(self) -> dict:
        q = lambda s: {"x_w": s.x_w, "y_w": s.y_w, "theta": s.theta}
        return {
            "schema": SCHEMA,
            "units": {"length": "m", "angle": "rad", "time": "s"},
            "name": self.name,
            "P0": q(self.P0),
            "P1": q(self.P1),
            "stcs": [s.to_dict() for s in self.stcs],
            "y_bounds": None if self.y_bounds is None else list(self.y_bounds),
            "x_bounds": None if self.x_bounds is None else list(self.x_bounds),
            "model": {"kappa_max": self.model.kappa_max},
            "params": dict(self.params),
            "start_region": None if self.start_region is None else self.start_region.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "Scenario":
        if d.get("schema", SCHEMA) != SCHEMA:
            raise ValueError(f"unsupported scenario schema {d.get('schema')!r}")
        q = lambda e: CarState(float(e["x_w"]), float(e["y_w"]), float(e["theta"]))
        tup = lambda v: None if v is None else tuple(float(a) for a in v)
        sr = d.get("start_region")
        return cls(
            name=d["name"],
            P0=q(d["P0"]),
            P1=q(d["P1"]),
            stcs=tuple(Stc.from_dict(s) for s in d.get("stcs", [])),
            y_bounds=tup(d.get("y_bounds")),
            x_bounds=tup(d.get("x_bounds")),
            model=ModelParams(float(d.get("model", {}).get("kappa_max", 1.0))),
            params=dict(d.get("params", {})),
            start_region=None if sr is None else StartRegion.from_dict(sr),
            seed=d.get("seed"),
        )


def nearest_heading(goal: CarState, theta_ref: float) -> CarState:
    k = round((theta_ref - goal.theta) / (2 * math.pi))
    return replace(goal, theta=goal.theta + 2 * math.pi * k)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(s.to_dict(), indent=2, sort_keys=True) + "\n")


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario not found: {path}")
    return Scenario.from_dict(json.loads(path.read_text()))


# Scenario constants. Start boxes and goal poses are choices of this package.
GAP_HALF_WIDTH = 1.0
CLEARANCE = 2.0
LOT_Y = (0.0, 5.0)
REVERSE_X = (-8.0, 8.0)
REVERSE_GOAL = CarState(0.0, 1.0, -math.pi / 2)
REVERSE_START = CarState(-3.0, 3.5, 0.0)
REVERSE_REGION = StartRegion((-4.0, 4.0), (3.0, 4.5), ((-60.0, 60.0), (150.0, 210.0)))

BAY_WIDTH = 5.0
BAY_DEPTH = 2.0
PARALLEL_X = (-10.0, 10.0)
PARALLEL_GOAL = CarState(0.0, 1.0, 0.0)
PARALLEL_START = CarState(1.0, 3.0, 0.0)
PARALLEL_REGION = StartRegion((0.5, 1.5), (2.75, 3.25), ((-10.0, 10.0),))
# A lighter smoothing weight than the library default keeps the time/jerk
# trade-off from stalling the trust region near convergence. Subproblem steps
# sit on the trust-region boundary, so convergence needs the radius to halve
# down to eps_step; 50 iterations leaves too little room for rejected steps.
PARKING_PARAMS = {"w_jerk": 0.01, "max_iters": 100}
# Length-dominant weighting for obstacle-free comparisons against Reeds-Shepp paths.
LENGTH_PARAMS = {"w_length": 1.0, "w_sigma": 0.01, "length_norm": "rs", "max_iters": 100}


def reverse_parking() -> Scenario:
    """Park nose-down in a 2 m wide, 2 m deep gap between two blocks."""
    s = Scenario(
        name="reverse",
        P0=REVERSE_START,
        P1=REVERSE_GOAL,
        stcs=(parking_gap_stc(GAP_HALF_WIDTH, CLEARANCE),),
        y_bounds=LOT_Y,
        x_bounds=REVERSE_X,
        start_region=REVERSE_REGION,
        params=dict(PARKING_PARAMS),
    )
    return s.with_start(REVERSE_START)


def parallel_parking() -> Scenario:
    """Slide sideways into a 5 m bay next to the curb, starting alongside it in the lane."""
    s = Scenario(
        name="parallel",
        P0=PARALLEL_START,
        P1=PARALLEL_GOAL,
        stcs=(parking_gap_stc(BAY_WIDTH / 2, BAY_DEPTH),),
        y_bounds=LOT_Y,
        x_bounds=PARALLEL_X,
        start_region=PARALLEL_REGION,
        params=dict(PARKING_PARAMS),
    )
    return s.with_start(PARALLEL_START)


def free_space(P0: CarState, P1: CarState, name: str = "free", model: ModelParams = ModelParams(),
               params: Optional[dict] = None) -> Scenario:
    """No obstacles or bounds; used for baseline comparisons."""
    s = Scenario(name=name, P0=P0, P1=P1, model=model, params=dict(params or {}))
    return s.with_start(P0)


BUILTIN = {"reverse": reverse_parking, "parallel": parallel_parking}


def sample_start(s: Scenario, seed: int) -> CarState:
    """Uniform pose in the start box with heading uniform over the interval union."""
    r = s.start_region
    if r is None:
        raise ValueError(f"scenario {s.name!r} has no start region")
    rng = np.random.default_rng(seed)
    x = rng.uniform(*r.x) if r.x[1] > r.x[0] else r.x[0]
    y = rng.uniform(*r.y) if r.y[1] > r.y[0] else r.y[0]
    widths = np.array([hi - lo for lo, hi in r.headings_deg])
    total = widths.sum()
    if total == 0:
        deg = r.headings_deg[0][0]
    else:
        t = rng.uniform(0.0, total)
        i = min(int(np.searchsorted(np.cumsum(widths), t, side="right")), len(widths) - 1)
        deg = r.headings_deg[i][0] + t - (np.cumsum(widths)[i] - widths[i])
        deg = min(max(deg, r.headings_deg[i][0]), r.headings_deg[i][1])
    return CarState(float(x), float(y), math.radians(deg))


def seeded(s: Scenario, seed: int) -> Scenario:
    return s.with_start(sample_start(s, seed), seed=seed)


# ---------------------------------------------------------------------------
# validation


def _bound_violation(s: Scenario, pts: np.ndarray) -> float:
    worst = 0.0
    for comp, b in ((0, s.x_bounds), (1, s.y_bounds)):
        if b is not None:
            worst = max(worst, float(np.max(b[0] - pts[:, comp], initial=0.0)),
                        float(np.max(pts[:, comp] - b[1], initial=0.0)))
    return worst


def _stc_violation(s: Scenario, pts: np.ndarray) -> float:
    return max([float(np.max(residual(c, pts), initial=0.0)) for c in s.stcs], default=0.0)


def point_violation(s: Scenario, pts) -> float:
    """Largest STC residual or bound excess over a set of states (0 when all are admissible)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return max(_bound_violation(s, pts), _stc_violation(s, pts))


def count_cusps(u1, tol: float = CUSP_SPEED_TOL) -> int:
    u1 = np.asarray(u1, dtype=float)
    signs = np.sign(u1[np.abs(u1) > tol])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def rs_metric_length(segments) -> float:
    """Sum over segments of ``sigma * int max(|u1|, |u2|) dtau`` under first-order hold.

    With speed ``u1`` and turning rate ``kappa_max * u2`` this is the integral of
    ``max(|v|, R |theta_dot|)``: the length a bounded-curvature car would need
    for the same motion, which reduces to arc length whenever the curvature
    stays within ``kappa_max``. The integrand is piecewise linear between the
    roots of ``u1``, ``u2`` and ``|u1| - |u2|``, so the trapezoid rule on those
    breakpoints is exact.
    """
    total = 0.0
    for seg in segments:
        u = np.asarray(seg.controls, dtype=float)
        h = 1.0 / (len(u) - 1)
        acc = 0.0
        for (a0, b0), (a1, b1) in zip(u[:-1], u[1:]):
            da, db = a1 - a0, b1 - b0
            cuts = [0.0, 1.0]
            for num, den in ((-a0, da), (-b0, db), (b0 - a0, da - db), (-b0 - a0, da + db)):
                if den != 0.0 and 0.0 < num / den < 1.0:
                    cuts.append(num / den)
            r = np.sort(cuts)
            f = np.maximum(np.abs(a0 + r * da), np.abs(b0 + r * db))
            acc += float(np.sum(np.diff(r) * (f[1:] + f[:-1]))) / 2.0
        total += seg.sigma * acc * h
    return total


@dataclass
class ViolationReport:
    max_stc_residual: float
    max_bound_violation: float
    boundary_position_error: float
    boundary_heading_error: float
    start_error: float
    continuity_gap: float
    knot_error: float
    control_violation: float
    path_length: float
    rs_length: float
    duration: float
    cusps: int
    dense: np.ndarray = field(repr=False, default=None)

    def ok(self, tol: float = 1e-3) -> bool:
        return (self.max_stc_residual <= tol and self.max_bound_violation <= tol
                and self.boundary_position_error <= tol and self.boundary_heading_error <= tol
                and self.start_error <= tol and self.control_violation <= 1e-8)

    def failures(self, tol: float = 1e-3) -> list:
        out = []
        if self.max_stc_residual > tol:
            out.append("stc")
        if self.max_bound_violation > tol:
            out.append("bounds")
        if self.boundary_position_error > tol or self.boundary_heading_error > tol:
            out.append("goal")
        if self.start_error > tol:
            out.append("start")
        if self.control_violation > 1e-8:
            out.append("controls")
        return out

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "dense"}
        d["cusps"] = int(self.cusps)
        return d


def dense_rollout(segments, P0, model: ModelParams = ModelParams(), n_dense: int = 20) -> list:
    """Open-loop integration from ``P0`` through every segment in turn."""
    x = np.asarray(P0, dtype=float)
    out = []
    for seg in segments:
        d = integrate_segment(x, seg.controls, seg.sigma, model, n_dense)
        out.append(d)
        x = d[-1]
    return out


def validate_trajectory(traj, s: Scenario, n_dense: int = 20) -> ViolationReport:
    """Check a solution against the scenario on the densely re-integrated path."""
    segs = traj.segments
    dense = dense_rollout(segs, s.P0, s.model, n_dense)
    allpts = np.concatenate(dense)
    end = allpts[-1]
    P1 = np.asarray(s.P1)
    knot_err = 0.0
    for seg, d in zip(segs, dense):
        knot_err = max(knot_err, float(np.abs(d[::n_dense] - seg.states).max()))
    gap = max([float(np.abs(a.states[-1] - b.states[0]).max()) for a, b in zip(segs[:-1], segs[1:])],
              default=0.0)
    u = np.concatenate([seg.controls for seg in segs])
    return ViolationReport(
        max_stc_residual=_stc_violation(s, allpts),
        max_bound_violation=_bound_violation(s, allpts),
        boundary_position_error=float(np.linalg.norm(end[:2] - P1[:2])),
        boundary_heading_error=float(abs(end[2] - P1[2])),
        start_error=float(np.abs(segs[0].states[0] - np.asarray(s.P0)).max()),
        continuity_gap=gap,
        knot_error=knot_err,
        control_violation=float(max(np.abs(u).max() - 1.0, 0.0)),
        path_length=float(sum(np.linalg.norm(np.diff(d[:, :2], axis=0), axis=1).sum() for d in dense)),
        rs_length=rs_metric_length(segs),
        duration=float(sum(seg.sigma for seg in segs)),
        cusps=count_cusps(u[:, 0]),
        dense=allpts,
    )
