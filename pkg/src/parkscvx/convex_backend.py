"""Standard-form conic problems (affine equalities, nonnegative and second-order cones).

Problems are assembled from sparse :class:`Affine` row blocks over a flat
variable vector and handed to a backend solver. The SCvx layer only ever sees
``ConicProblem`` / ``ConicSolution``; Clarabel is the default backend and
CVXOPT is available as an independent reference.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-6


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERS = "MaxIters"
    NUMERICAL_FAILURE = "NumericalFailure"


class MalformedProblem(ValueError):
    pass


@dataclass
class Affine:
    """A block of ``m`` affine rows ``sum_j vals * v[cols] + const[row]`` in COO form."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    const: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=float)
        self.const = np.atleast_1d(np.asarray(self.const, dtype=float))

    @property
    def m(self) -> int:
        return self.const.shape[0]

    @classmethod
    def var(cls, idx) -> "Affine":
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        n = idx.shape[0]
        return cls(np.arange(n), idx, np.ones(n), np.zeros(n))

    @classmethod
    def constant(cls, c) -> "Affine":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), c)

    @classmethod
    def linear(cls, M, idx, const=None) -> "Affine":
        """Dense ``M @ v[idx] + const``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        idx = np.asarray(idx, dtype=np.int64)
        m, n = M.shape
        r, c = np.nonzero(M)
        const = np.zeros(m) if const is None else np.broadcast_to(np.asarray(const, dtype=float), (m,))
        return cls(r, idx[c], M[r, c], const)

    def __add__(self, other):
        if not isinstance(other, Affine):
            other = Affine.constant(np.broadcast_to(np.asarray(other, dtype=float), (self.m,)))
        if other.m != self.m:
            raise MalformedProblem(f"row count mismatch {self.m} vs {other.m}")
        return Affine(np.concatenate([self.rows, other.rows]), np.concatenate([self.cols, other.cols]),
                      np.concatenate([self.vals, other.vals]), self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine(self.rows, self.cols, -self.vals, -self.const)

    def __sub__(self, other):
        if not isinstance(other, Affine):
            other = np.asarray(other, dtype=float)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, a: float):
        a = float(a)
        return Affine(self.rows, self.cols, self.vals * a, self.const * a)

    __rmul__ = __mul__

    def sum(self) -> "Affine":
        return Affine(np.zeros_like(self.rows), self.cols, self.vals, [self.const.sum()])

    def take(self, rows) -> "Affine":
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        remap = -np.ones(self.m, dtype=np.int64)
        remap[rows] = np.arange(rows.shape[0])
        keep = np.isin(self.rows, rows)
        return Affine(remap[self.rows[keep]], self.cols[keep], self.vals[keep], self.const[rows])

    def evaluate(self, v) -> np.ndarray:
        out = self.const.copy()
        np.add.at(out, self.rows, self.vals * np.asarray(v)[self.cols])
        return out

    def max_index(self) -> int:
        return int(self.cols.max()) if self.cols.size else -1


def vstack(blocks) -> Affine:
    rows, cols, vals, const = [], [], [], []
    off = 0
    for b in blocks:
        rows.append(b.rows + off)
        cols.append(b.cols)
        vals.append(b.vals)
        const.append(b.const)
        off += b.m
    return Affine(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), np.concatenate(const))


@dataclass
class ConicProblem:
    """min c'v + c0  s.t.  eq(v) = 0, nonneg(v) >= 0, ||y_i(v)||_2 <= t_i(v)."""

    n_vars: int = 0
    objective: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_constant: float = 0.0
    equalities: list = field(default_factory=list)
    nonneg_cones: list = field(default_factory=list)
    soc_cones: list = field(default_factory=list)  # stacked [t; y] blocks

    def add_variable_block(self, n: int) -> range:
        if n < 1:
            raise ValueError("variable block size must be >= 1")
        start = self.n_vars
        self.n_vars += n
        self.objective = np.concatenate([self.objective, np.zeros(n)])
        return range(start, start + n)

    def add_cost(self, expr: Affine, weight: float = 1.0) -> None:
        """Add ``weight * sum(rows of expr)`` to the objective."""
        np.add.at(self.objective, expr.cols, weight * expr.vals)
        self.objective_constant += weight * float(expr.const.sum())

    def add_equality(self, expr: Affine) -> None:
        self.equalities.append(expr)

    def add_nonneg(self, expr: Affine) -> None:
        self.nonneg_cones.append(expr)

    def add_soc(self, t: Affine, y: Affine) -> None:
        if t.m != 1 or y.m < 1:
            raise MalformedProblem("SOC needs a scalar t and a block y of dimension >= 1")
        self.soc_cones.append(vstack([t, y]))

    @property
    def n_equalities(self) -> int:
        return sum(e.m for e in self.equalities)

    @property
    def n_inequalities(self) -> int:
        return sum(e.m for e in self.nonneg_cones)

    def check(self) -> None:
        for group in (self.equalities, self.nonneg_cones, self.soc_cones):
            for e in group:
                if e.max_index() >= self.n_vars or (e.cols.size and e.cols.min() < 0):
                    raise MalformedProblem("affine form references an unknown variable")
                if e.rows.size and (e.rows.min() < 0 or e.rows.max() >= e.m):
                    raise MalformedProblem("affine form row index out of range")
                if not (np.all(np.isfinite(e.vals)) and np.all(np.isfinite(e.const))):
                    raise MalformedProblem("non-finite coefficient")
        if not np.all(np.isfinite(self.objective)):
            raise MalformedProblem("non-finite objective")
        for s in self.soc_cones:
            if s.m < 2:
                raise MalformedProblem("SOC block must have dimension >= 1")

    def objective_value(self, v) -> float:
        return float(self.objective @ v + self.objective_constant)

    def residuals(self, v) -> dict:
        """Infinity-norm equality residual and worst cone violations at ``v``."""
        v = np.asarray(v, dtype=float)
        eq = max((np.abs(e.evaluate(v)).max() for e in self.equalities if e.m), default=0.0)
        nn = max((max(0.0, -e.evaluate(v).min()) for e in self.nonneg_cones if e.m), default=0.0)
        soc = 0.0
        for s in self.soc_cones:
            ty = s.evaluate(v)
            soc = max(soc, float(np.linalg.norm(ty[1:]) - ty[0]))
        return {"equality": float(eq), "nonneg": float(nn), "soc": float(max(soc, 0.0))}

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        def blk(e):
            return {"rows": e.rows.tolist(), "cols": e.cols.tolist(), "vals": e.vals.tolist(),
                    "const": e.const.tolist()}

        return {
            "format": "parkscvx.conic/1",
            "n_vars": self.n_vars,
            "objective": self.objective.tolist(),
            "objective_constant": self.objective_constant,
            "equalities": [blk(e) for e in self.equalities],
            "nonneg_cones": [blk(e) for e in self.nonneg_cones],
            "soc_cones": [blk(e) for e in self.soc_cones],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConicProblem":
        def blk(b):
            return Affine(b["rows"], b["cols"], b["vals"], b["const"])

        return cls(
            n_vars=int(d["n_vars"]),
            objective=np.asarray(d["objective"], dtype=float),
            objective_constant=float(d["objective_constant"]),
            equalities=[blk(b) for b in d["equalities"]],
            nonneg_cones=[blk(b) for b in d["nonneg_cones"]],
            soc_cones=[blk(b) for b in d["soc_cones"]],
        )

    def dump_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load_json(cls, path) -> "ConicProblem":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ConicSolution:
    status: Status
    v: Optional[np.ndarray]
    objective_value: float
    iterations: int = 0
    residuals: dict = field(default_factory=dict)


def add_variable_block(p: ConicProblem, n: int) -> range:
    return p.add_variable_block(n)


def add_abs_epigraph(p: ConicProblem, e: Affine, weight: Optional[float] = None) -> range:
    """Fresh variables ``t >= |e|`` row by row; optionally add ``weight * sum(t)`` to the cost."""
    t = p.add_variable_block(e.m)
    tv = Affine.var(t)
    p.add_nonneg(tv - e)
    p.add_nonneg(tv + e)
    if weight is not None:
        p.add_cost(tv, weight)
    return t


def add_soc_epigraph(p: ConicProblem, y: Affine, weight: Optional[float] = None) -> int:
    """Fresh scalar ``t >= ||y||_2``; optionally add ``weight * t`` to the cost."""
    t = p.add_variable_block(1)
    p.add_soc(Affine.var(t), y)
    if weight is not None:
        p.add_cost(Affine.var(t), weight)
    return t.start


def _stack(p: ConicProblem, blocks, negate: bool):
    """COO blocks to CSR ``(M, b)`` with ``expr = M v + b``; ``negate`` flips to ``-M``."""
    rows, cols, vals, const = [], [], [], []
    off = 0
    for e in blocks:
        rows.append(e.rows + off)
        cols.append(e.cols)
        vals.append(e.vals)
        const.append(e.const)
        off += e.m
    if off == 0:
        return sp.csc_matrix((0, p.n_vars)), np.zeros(0)
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(off, p.n_vars)).tocsc()
    M.sum_duplicates()
    return (-M if negate else M), np.concatenate(const)


def solve(p: ConicProblem, backend: str = "clarabel", tol: float = 1e-8) -> ConicSolution:
    """Solve ``p``; solver outcomes are reported through ``status``, never raised."""
    p.check()
    if backend == "clarabel":
        sol = _solve_clarabel(p, tol)
    elif backend == "cvxopt":
        sol = _solve_cvxopt(p, tol)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if sol.v is not None:
        sol.residuals = p.residuals(sol.v)
        if sol.status is Status.OPTIMAL and max(sol.residuals.values()) > FEAS_TOL:
            sol.status = Status.NUMERICAL_FAILURE
    return sol


def _solve_clarabel(p: ConicProblem, tol: float) -> ConicSolution:
    import clarabel

    # Clarabel form: A v + s = b, s in K; expr = M v + c in K means A = -M, b = c
    Ae, be = _stack(p, p.equalities, negate=True)
    An, bn = _stack(p, p.nonneg_cones, negate=True)
    As, bs = _stack(p, p.soc_cones, negate=True)
    A = sp.vstack([Ae, An, As]).tocsc()
    b = np.concatenate([be, bn, bs])
    cones = []
    if Ae.shape[0]:
        cones.append(clarabel.ZeroConeT(Ae.shape[0]))
    if An.shape[0]:
        cones.append(clarabel.NonnegativeConeT(An.shape[0]))
    for s in p.soc_cones:
        cones.append(clarabel.SecondOrderConeT(s.m))
    P = sp.csc_matrix((p.n_vars, p.n_vars))
    # Large penalty weights stall the interior-point iteration; solve with the
    # cost normalized to unit max-norm (same minimizer).
    cmax = float(np.abs(p.objective).max(initial=0.0))
    c = p.objective / cmax if cmax > 0 else p.objective.copy()
    gap = tol / max(cmax, 1.0)
    status, res, v = Status.NUMERICAL_FAILURE, None, None
    iters = 0
    # Retry stalled solves with more careful linear algebra; the first success wins.
    for extra in _CLARABEL_RETRIES:
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_feas = tol
        # Clarabel floors the relative-gap denominator at 1, so both gap tests
        # are rescaled to hold in the original objective units.
        settings.tol_gap_abs = gap
        settings.tol_gap_rel = gap
        settings.max_threads = 1
        for k, val in extra.items():
            setattr(settings, k, val)
        res = clarabel.DefaultSolver(P, c, A, b, cones, settings).solve()
        iters += res.iterations
        name = str(res.status)
        v = np.asarray(res.x, dtype=float)
        if name in ("Solved", "AlmostSolved"):
            status = Status.OPTIMAL
            if max(p.residuals(v).values()) <= FEAS_TOL:
                break
            status = Status.NUMERICAL_FAILURE
        elif "PrimalInfeasible" in name:
            status = Status.INFEASIBLE
            break
        elif "DualInfeasible" in name:
            status = Status.UNBOUNDED
            break
        elif name == "MaxIterations":
            status = Status.MAX_ITERS
        else:
            status = Status.NUMERICAL_FAILURE
    if status is not Status.OPTIMAL:
        return ConicSolution(status, None, float("nan"), iters)
    return ConicSolution(status, v, p.objective_value(v), iters)


_CLARABEL_RETRIES = (
    {},
    {"iterative_refinement_reltol": 1e-14, "iterative_refinement_abstol": 1e-14,
     "iterative_refinement_max_iter": 50},
    {"max_step_fraction": 0.9},
    {"equilibrate_enable": False},
)


def _solve_cvxopt(p: ConicProblem, tol: float) -> ConicSolution:
    import cvxopt
    from cvxopt import solvers

    def to_cvx(M):
        M = M.tocoo()
        return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), M.shape)

    # cvxopt form: G v + s = h, s in K; A v = b
    Ae, be = _stack(p, p.equalities, negate=False)
    Gn, hn = _stack(p, p.nonneg_cones, negate=True)
    Gs, hs = _stack(p, p.soc_cones, negate=True)
    G = sp.vstack([Gn, Gs]).tocsc()
    h = np.concatenate([hn, hs])
    dims = {"l": Gn.shape[0], "q": [s.m for s in p.soc_cones], "s": []}
    opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol, "maxiters": 200}
    kw = {}
    if Ae.shape[0]:
        kw = {"A": to_cvx(Ae), "b": cvxopt.matrix(-be)}
    cmax = float(np.abs(p.objective).max(initial=0.0))
    c = p.objective / cmax if cmax > 0 else p.objective
    res = solvers.conelp(cvxopt.matrix(c), to_cvx(G), cvxopt.matrix(h), dims, options=opts, **kw)
    name = res["status"]
    if name == "optimal":
        v = np.array(res["x"]).ravel()
        return ConicSolution(Status.OPTIMAL, v, p.objective_value(v), res["iterations"])
    if name == "primal infeasible":
        return ConicSolution(Status.INFEASIBLE, None, float("nan"), res["iterations"])
    if name == "dual infeasible":
        return ConicSolution(Status.UNBOUNDED, None, float("nan"), res["iterations"])
    # "unknown": accept when the iterate is accurate enough
    if res["x"] is not None:
        v = np.array(res["x"]).ravel()
        if max(p.residuals(v).values()) <= FEAS_TOL and res.get("relative gap") is not None \
                and res["relative gap"] < 1e-6:
            return ConicSolution(Status.OPTIMAL, v, p.objective_value(v), res["iterations"])
    return ConicSolution(Status.NUMERICAL_FAILURE, None, float("nan"), res["iterations"])
