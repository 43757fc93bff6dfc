"""Command-line front end: ``plan``, ``rs-compare`` and ``history``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import reeds_shepp as rs
from . import scenarios as sc
from .scvx_solver import ScvxError, ScvxParams, params_to_dict, scvx_run
from .svgplot import history_svg, trajectory_svg
from .vehicle_model import CarState, ModelParams

ARTIFACT_SCHEMA = "parkscvx.artifact/1"
CSV_COLUMNS = ("segment", "k", "tau", "x_w", "y_w", "theta", "u1", "u2")
FORMATS = ("json", "csv", "svg")
VALIDATION_TOL = 1e-3
RS_SAMPLE_STEP = 0.05  # m

EXIT_OK = 0
EXIT_FAILED = 1  # solver ran but did not converge or failed validation
EXIT_USAGE = 2


class CliError(Exception):
    """Bad input; ``reason`` is a short machine-readable tag."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


def _plain(obj):
    """JSON-ready copy: numpy arrays to lists, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # repr gives the shortest string that round-trips, at most 17 significant digits
        return x if math.isfinite(x) else None
    return obj


def dumps_artifact(artifact: dict) -> str:
    return json.dumps(_plain(artifact), indent=1, sort_keys=True, allow_nan=False) + "\n"


def build_artifact(scenario, params: ScvxParams, sol, report, rs_path=None) -> dict:
    """Self-contained record of one run; plots are regenerated from this alone."""
    rs_block = None
    if rs_path is not None:
        pts = rs.sample(rs_path, scenario.P0, ds=RS_SAMPLE_STEP)
        rs_block = {"word": rs_path.word, "length": rs_path.length, "radius": rs_path.radius,
                    "samples": [np.asarray(q) for q in pts]}
    return {
        "schema_version": ARTIFACT_SCHEMA,
        "scenario": scenario.to_dict(),
        "params": params_to_dict(params),
        "status": sol.status,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "nu_l1": sol.nu_norm,
        "segments": [{"sigma": s.sigma, "tau": s.tau, "states": s.states, "controls": s.controls}
                     for s in sol.segments],
        "dense": np.split(report.dense, len(sol.segments)) if report.dense is not None else [],
        "rs_baseline": rs_block,
        "report": report.to_dict(),
        "clean": bool(sol.converged and report.ok(VALIDATION_TOL)),
        "history": sol.history,
    }


def knots_csv(artifact: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for i, seg in enumerate(artifact["segments"]):
        for k, (t, x, u) in enumerate(zip(seg["tau"], seg["states"], seg["controls"])):
            w.writerow([i, k] + [repr(float(v)) for v in (t, *x, *u)])
    return buf.getvalue()


def _solve(scenario, params: ScvxParams):
    try:
        sol = scvx_run(scenario, params)
    except ScvxError as e:
        sol = e.solution
    return sol, sc.validate_trajectory(sol, scenario)


def _failure_reason(artifact: dict) -> str:
    if not artifact["converged"]:
        return "not converged" if artifact["status"] == "max_iters" else f"solver error ({artifact['status']})"
    fails = sc.ViolationReport(**{**artifact["report"], "dense": None}).failures(VALIDATION_TOL)
    return "validation failed: " + ",".join(fails)


def _emit(result: dict) -> None:
    print(json.dumps(_plain(result), sort_keys=True))


def _load_scenario(args) -> sc.Scenario:
    if args.file is not None and args.scenario is not None:
        raise CliError("bad input", "give a scenario name or --file, not both")
    if args.file is not None:
        try:
            s = sc.load_scenario(args.file)
        except FileNotFoundError:
            raise CliError("scenario not found", str(args.file))
        except (ValueError, KeyError, TypeError) as e:
            raise CliError("bad scenario file", f"{args.file}: {e}")
    elif args.scenario is not None:
        s = sc.BUILTIN[args.scenario]()
    else:
        raise CliError("bad input", "a scenario name or --file is required")
    if args.seed is not None:
        if s.start_region is None:
            raise CliError("bad input", f"scenario {s.name!r} has no start region to sample")
        s = sc.seeded(s, args.seed)
    return s


def _params(s: sc.Scenario, knots=None) -> ScvxParams:
    over = dict(s.params)
    if knots is not None:
        over["K"] = knots
    try:
        return ScvxParams(**over)
    except (TypeError, ValueError) as e:
        raise CliError("bad input", str(e))


def _write(out: Path, stem: str, artifact: dict, formats) -> list:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    render = {"json": dumps_artifact, "csv": knots_csv, "svg": trajectory_svg}
    for fmt in formats:
        path = out / f"{stem}.{fmt}"
        path.write_text(render[fmt](artifact))
        written.append(str(path))
    return written


def cmd_plan(args) -> int:
    s = _load_scenario(args)
    params = _params(s, args.knots)
    sol, report = _solve(s, params)
    artifact = build_artifact(s, params, sol, report, rs.shortest_path(s.P0, s.P1, 1.0 / s.model.kappa_max))
    stem = s.name if s.seed is None else f"{s.name}_seed{s.seed}"
    files = _write(Path(args.out), stem, artifact, args.format or FORMATS)
    result = {"scenario": s.name, "seed": s.seed, "status": sol.status, "iterations": sol.iterations,
              "cusps": report.cusps, "duration": report.duration, "files": files}
    if not artifact["clean"]:
        result["error"] = _failure_reason(artifact)
        _emit(result)
        return EXIT_FAILED
    _emit(result)
    return EXIT_OK


def _pose(values, flag) -> CarState:
    try:
        q = CarState(*(float(v) for v in values))
    except ValueError as e:
        raise CliError("bad input", f"{flag}: {e}")
    return q


def cmd_rs_compare(args) -> int:
    if not args.radius > 0:
        raise CliError("bad input", "--radius must be positive")
    q0, q1 = _pose(args.q0, "q0"), _pose(args.q1, "q1")
    s = sc.free_space(q0, q1, name="rs_compare", model=ModelParams(1.0 / args.radius), params=sc.LENGTH_PARAMS)
    params = _params(s)
    sol, report = _solve(s, params)
    path = rs.shortest_path(s.P0, s.P1, args.radius)
    artifact = build_artifact(s, params, sol, report, path)
    files = _write(Path(args.out), "rs_compare", artifact, ("json", "svg"))
    ratio = report.rs_length / path.length if path.length > 0 else float("nan")
    result = {"status": sol.status, "iterations": sol.iterations, "rs_word": path.word,
              "rs_length": path.length, "scvx_length": report.rs_length,
              "scvx_arc_length": report.path_length, "ratio": ratio, "files": files}
    if not artifact["clean"]:
        result["error"] = _failure_reason(artifact)
    print(f"RS length    {path.length:.6f} m ({path.word})")
    print(f"SCvx length  {report.rs_length:.6f} m (arc length {report.path_length:.6f} m)")
    print(f"ratio        {ratio:.6f}")
    _emit(result)
    return EXIT_OK if artifact["clean"] else EXIT_FAILED


def cmd_history(args) -> int:
    src = Path(args.input)
    if not src.is_file():
        raise CliError("artifact not found", str(src))
    try:
        artifact = json.loads(src.read_text())
        if artifact.get("schema_version") != ARTIFACT_SCHEMA:
            raise ValueError(f"unknown schema_version {artifact.get('schema_version')!r}")
        svg = history_svg(artifact["history"])
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise CliError("corrupt artifact", f"{src}: {e}")
    out = Path(args.out) if args.out else src.with_name(src.stem + "_history.svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    _emit({"files": [str(out)], "iterations": len(artifact["history"])})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parkscvx", description="Parking maneuvers by successive convexification.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="solve a parking scenario and write artifacts")
    p.add_argument("scenario", nargs="?", choices=sorted(sc.BUILTIN), help="built-in scenario")
    p.add_argument("--file", type=Path, help="scenario JSON file")
    p.add_argument("--seed", type=int, help="sample the start pose from the scenario's start region")
    p.add_argument("--knots", type=int, help="knot points per segment (default 20)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--format", action="append", choices=FORMATS,
                   help="artifact to write; repeatable (default: all)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("rs-compare", help="free-space SCvx solution against the Reeds-Shepp shortest path")
    p.add_argument("q0", nargs=3, metavar=("X0", "Y0", "TH0"))
    p.add_argument("q1", nargs=3, metavar=("X1", "Y1", "TH1"))
    p.add_argument("--radius", type=float, default=1.0, help="minimum turning radius [m]")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_rs_compare)

    p = sub.add_parser("history", help="convergence plot from a run artifact")
    p.add_argument("--in", dest="input", required=True, help="artifact JSON")
    p.add_argument("--out", help="SVG path (default: next to the artifact)")
    p.set_defaults(func=cmd_history)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(json.dumps({"error": e.reason, "detail": e.detail}), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
