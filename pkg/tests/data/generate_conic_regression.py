"""Regenerate the serialized subproblem regression set.

Each problem is an SCvx subproblem at K=5 taken from the first iterations of
a small run; the reference objective comes from CVXOPT at tight tolerances.
Run from the repository root:  python tests/data/generate_conic_regression.py
"""

import json
from pathlib import Path

from parkscvx import convex_backend as cb
from parkscvx import scenarios as sc
from parkscvx import scvx_solver as sv
from parkscvx.vehicle_model import CarState

HERE = Path(__file__).parent
K = 5


def cases():
    yield "reverse_nominal", sc.reverse_parking(), 1.0
    yield "reverse_seed3", sc.seeded(sc.reverse_parking(), 3), 0.5
    yield "parallel_nominal", sc.parallel_parking(), 1.0
    yield "parallel_seed4", sc.seeded(sc.parallel_parking(), 4), 0.25
    yield "free_straight", sc.free_space(CarState(0, 0, 0), CarState(5, 0, 0)), 1.0
    yield "free_uturn", sc.free_space(CarState(3, 0, 0), CarState(0, 0, 3.141592653589793)), 1.0
    yield "free_sideways", sc.free_space(CarState(0, 0, 0), CarState(0, 3, 0)), 2.0
    yield "free_length_rs", sc.free_space(CarState(0, 0, 0), CarState(2, 3, 1.0), params=sc.LENGTH_PARAMS), 1.0
    yield "free_length_l2", sc.free_space(CarState(0, 0, 0), CarState(-2, 4, -2.0),
                                          params={"w_length": 1.0, "length_norm": "l2"}), 0.5
    yield "reverse_tight_tr", sc.seeded(sc.reverse_parking(), 8), 0.05


def main():
    manifest = {}
    for name, s, tr in cases():
        params = sv.ScvxParams(**{**s.params, "K": K})
        scaling = sv.scaling_for(s, params)
        segs = sv.initialize_segments(s.P0, s.P1, params)
        ltv = sv.discretize_many(segs, s.model, params.substeps, params.n_sub)
        p = sv.build_subproblem(segs, ltv, s, tr, scaling, params).problem
        ref = cb.solve(p, "cvxopt", tol=1e-9)
        if ref.status is not cb.Status.OPTIMAL:
            raise RuntimeError(f"{name}: reference solve returned {ref.status.value}")
        fname = f"conic_{name}.json"
        p.dump_json(HERE / fname)
        manifest[name] = {"file": fname, "objective": ref.objective_value, "n_vars": p.n_vars}
        print(f"{name:20s} n={p.n_vars:5d} obj={ref.objective_value:.12g}")
    (HERE / "conic_regression.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
