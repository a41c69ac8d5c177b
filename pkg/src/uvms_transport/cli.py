"""Command-line runner: ``uvms-transport run`` and ``uvms-transport check``.

Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 acceptance
violation under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ScenarioError, UvmsError

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3
PLOT_STRIDE = 10

log = logging.getLogger("uvms_transport")


def trajectory_header(sc):
    """Column names of the trajectory log, one row per plant substep."""
    cols = ["time"]
    n = sc.agents[0].n
    for i in range(sc.n_agents):
        cols += [f"a{i}_q{j}" for j in range(n)]
        cols += [f"a{i}_qdot{j}" for j in range(n)]
        cols += [f"a{i}_tau{j}" for j in range(n)]
        cols += [f"a{i}_u{j}" for j in range(6)]
        cols += [f"a{i}_lambda{j}" for j in range(6)]
        cols += [f"a{i}_det_jjt", f"a{i}_grasp_residual"]
        na = sc.agents[i].arm_dof
        cols += [f"a{i}_margin_joint{j}" for j in range(na)]
        cols += [f"a{i}_margin_vel{j}" for j in range(n)]
        cols += [f"a{i}_margin_tau{j}" for j in range(n)]
    cols += ["obj_x", "obj_y", "obj_z", "obj_roll", "obj_pitch", "obj_yaw"]
    cols += ["obj_vx", "obj_vy", "obj_vz", "obj_wx", "obj_wy", "obj_wz"]
    cols += ["clearance"]
    return cols


def trajectory_rows(L, sc):
    N = sc.n_agents
    T = len(L.t)
    blocks = [L.t[:, None]]
    for i in range(N):
        blocks += [L.q[:, i], L.qdot[:, i], L.tau[:, i], L.u[:, i], L.lam[:, i],
                   L.det[:, i:i + 1], L.grasp_residual[:, i:i + 1], L.margins[:, i]]
    blocks += [L.x_obj, L.v_obj, L.clearance[:, None]]
    return np.hstack([np.asarray(b, dtype=float).reshape(T, -1) for b in blocks])


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def write_artifacts(out: Path, L, sc, summary):
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "trajectory.csv", trajectory_header(sc), trajectory_rows(L, sc))
    with open(out / "summary.json", "w") as f:
        json.dump(summary.to_dict(), f, indent=2, sort_keys=True)
    s = slice(None, None, PLOT_STRIDE)
    N = sc.n_agents
    t = L.t[s, None]
    plots = {
        "object_path.csv": (["time", "x", "y", "z", "roll", "pitch", "yaw"], np.hstack([t, L.x_obj[s]])),
        "singularity_measure.csv": (["time"] + [f"det_jjt_{i}" for i in range(N)],
                                    np.hstack([t, L.det[s]])),
        "clearance.csv": (["time", "clearance"], np.hstack([t, L.clearance[s, None]])),
    }
    for i in range(N):
        n = sc.agents[i].n
        plots[f"velocities_agent{i}.csv"] = (["time"] + [f"qdot{j}" for j in range(n)],
                                             np.hstack([t, L.qdot[s, i]]))
        plots[f"torques_agent{i}.csv"] = (["time"] + [f"tau{j}" for j in range(n)],
                                          np.hstack([t, L.tau[s, i]]))
        plots[f"arm_joints_agent{i}.csv"] = (["time"] + [f"q{j}" for j in range(6, n)],
                                             np.hstack([t, L.q[s, i, 6:]]))
    for name, (hdr, rows) in plots.items():
        _write_csv(out / name, hdr, rows)


def cmd_run(args) -> int:
    from .metrics import summarize
    from .scenario import load_scenario
    from .sim import run_closed_loop

    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    for w in sc.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.dry_run:
        print(f"scenario {sc.name!r} is valid ({sc.n_agents} agents, "
              f"{len(sc.waypoints)} waypoints)")
        return EXIT_OK

    out = Path(args.out or sc.output_dir)
    t0 = time.perf_counter()
    last = [0.0]

    def progress(t, state, captured):
        if t - last[0] >= 10.0 - 1e-9:
            last[0] = t
            x = state.x_obj
            log.info("t=%6.1f s  object at (%.2f, %.2f, %.2f)  waypoints captured %d",
                     t, x[0], x[1], x[2], captured)

    try:
        L = run_closed_loop(sc, jobs=args.jobs, audit_strict=False, progress=progress)
    except UvmsError as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = summarize(L, sc)
    write_artifacts(out, L, sc, summary)
    wall = time.perf_counter() - t0
    print(f"run finished ({L.terminated}) at t={summary.final_time:.2f} s in {wall:.0f} s wall; "
          f"artifacts in {out}")
    for name, ok in summary.checks.items():
        print(f"  {'PASS' if ok else 'FAIL'}  {name}")
    if args.strict and not summary.passed:
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import SUITES, run_suites

    try:
        results = run_suites(args.suite)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, UvmsError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="uvms-transport",
                                description="Cooperative payload transport by vehicle-manipulator teams.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate a scenario file")
    r.add_argument("scenario", help="scenario YAML file")
    r.add_argument("--strict", action="store_true",
                   help="exit 3 when any closed-loop acceptance property fails")
    r.add_argument("--jobs", type=int, default=1, help="concurrent controller solves")
    r.add_argument("--out", help="output directory (default: from the scenario)")
    r.add_argument("--dry-run", action="store_true", help="validate only, write nothing")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run the property suites")
    c.add_argument("--suite", nargs="+", metavar="NAME",
                   help="subset of: identity fd energy nf lqr")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
