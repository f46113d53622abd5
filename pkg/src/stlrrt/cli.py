"""Command-line entry point: ``stlrrt {encode,plan,simulate,monitor}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import StlrrtError
from .formula import parse
from .geometry import enumerate_vertices
from .invariance import RolloutPlan
from .monitor import SampledSignal, robustness
from .planner import PlannerParams, plan
from .scenario import load_scenario
from .trajectory import Trajectory

log = logging.getLogger("stlrrt")

BOUNDARY_FRAMES = 60


# ---------------------------------------------------------------- csv io

def _fmt(v):
    return "nan" if math.isnan(v) else "%.17g" % v


def write_trajectory_csv(path, traj: Trajectory):
    """Columns t, x1..xn, u1..um; the last row has no input and holds nan."""
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    U = np.vstack([traj.inputs, np.full((1, m), np.nan)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)])
        for k in range(traj.times.size):
            w.writerow([_fmt(traj.times[k])] + [_fmt(v) for v in traj.states[k]]
                       + [_fmt(v) for v in U[k]])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ValueError(f"{path}: need a header and at least two rows")
    head = rows[0]
    xs = [i for i, h in enumerate(head) if h.startswith("x")]
    us = [i for i, h in enumerate(head) if h.startswith("u")]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    m = max(len(us), 1)
    U = data[:-1][:, us] if us else np.zeros((data.shape[0] - 1, m))
    return Trajectory(data[:, 0], data[:, xs], U)


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o)}")


# ---------------------------------------------------------------- helpers

def _encode(sc):
    best, results = sc.encode()
    return best, results, {
        "scenario": sc.name,
        "selected": best,
        "r_star": results[best].robustness,
        "disjuncts": [r.summary() for r in results],
    }


def _polygon(P):
    V = enumerate_vertices(P).vertices
    c = V.mean(axis=0)
    return V[np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))]


def write_boundary_csv(path, cb, t_end, frames=BOUNDARY_FRAMES):
    """Barrier set outline per frame: polygon vertices in 2-D, bounding box otherwise."""
    n = cb.state_set.dim
    ts = np.union1d(np.linspace(0.0, t_end, frames), [s for s in cb.switch_times if s <= t_end])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if n == 2:
            w.writerow(["frame", "t", "vertex", "x1", "x2"])
        else:
            w.writerow(["frame", "t"] + [f"lo{i + 1}" for i in range(n)]
                       + [f"hi{i + 1}" for i in range(n)])
        for f, t in enumerate(ts):
            P = cb.set_at(float(t), closed=True)
            if n == 2:
                for k, v in enumerate(_polygon(P)):
                    w.writerow([f, _fmt(t), k, _fmt(v[0]), _fmt(v[1])])
            else:
                lo, hi = P.bounding_box
                w.writerow([f, _fmt(t)] + [_fmt(v) for v in lo] + [_fmt(v) for v in hi])


# ---------------------------------------------------------------- commands

def cmd_encode(args, sc, out: Path):
    _, _, doc = _encode(sc)
    _dump(out / "encode.json", doc)
    return doc


def cmd_plan(args, sc, out: Path):
    best, results, enc = _encode(sc)
    cb = results[best].barrier
    params = PlannerParams.from_scenario(sc, args.seed, args.iters)
    res = plan(cb, sc.dyn, sc.x0, params, sc.obstacles)
    traj = res.trajectory
    dense_dt = params.dt / 2.0
    rho = robustness(sc.formula, SampledSignal(traj.times, traj.states), sc.predicates,
                     dense_dt=dense_dt)
    st = res.stats.to_dict(wall_times=False)
    doc = {
        "scenario": sc.name, "seed": params.seed, "selected": best, "r_star": enc["r_star"],
        "t_hr": res.t_hr, "rho": rho, "dense_dt": dense_dt,
        "collision_resolution": params.collision_resolution, **st,
        "wall_time": {k: getattr(res.stats, k) for k in res.stats.WALL_FIELDS},
    }
    write_trajectory_csv(out / "trajectory.csv", traj)
    write_boundary_csv(out / "barrier_boundary.csv", cb, res.t_hr)
    _dump(out / "stats.json", doc)
    return {k: doc[k] for k in ("scenario", "seed", "selected", "r_star", "rho", "first_cost",
                                "best_cost", "iterations", "nodes")}


def cmd_simulate(args, sc, out: Path):
    best, results, enc = _encode(sc)
    cb = results[best].barrier
    dt = args.dt or sc.rollout_dt
    traj = RolloutPlan(cb, sc.dyn, sc.kappa, dt).run(sc.x0)
    rho = robustness(sc.formula, SampledSignal(traj.times, traj.states), sc.predicates,
                     dense_dt=dt)
    doc = {"scenario": sc.name, "selected": best, "r_star": enc["r_star"], "dt": dt,
           "t_end": float(traj.t1), "min_barrier": float(np.min(traj.barrier)), "rho": rho}
    write_trajectory_csv(out / "rollout.csv", traj)
    _dump(out / "simulate.json", doc)
    return doc


def cmd_monitor(args, sc, out: Path):
    if not args.trajectory:
        raise StlrrtError("monitor needs --trajectory")
    traj = read_trajectory_csv(args.trajectory)
    f = parse(args.formula, sc.predicates) if args.formula else sc.formula
    dense_dt = args.dense_dt or sc.planner["dt"] / 2.0
    rho = robustness(f, SampledSignal(traj.times, traj.states), sc.predicates, dense_dt=dense_dt)
    doc = {"scenario": sc.name, "trajectory": str(args.trajectory), "dense_dt": dense_dt,
           "rho": rho}
    if args.r is not None:
        doc["satisfied"] = bool(rho >= args.r)
    return doc


COMMANDS = {"encode": cmd_encode, "plan": cmd_plan, "simulate": cmd_simulate,
            "monitor": cmd_monitor}


def build_parser():
    ap = argparse.ArgumentParser(prog="stlrrt", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True,
                       help="scenario JSON (path, or the name of a shipped scenario)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            p.add_argument("--dt", type=float, default=None)
        if name == "monitor":
            p.add_argument("--trajectory", required=True)
            p.add_argument("--formula", default=None, help="override the scenario formula")
            p.add_argument("--dense-dt", type=float, default=None)
            p.add_argument("--r", type=float, default=None, help="required robustness degree")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        sc = load_scenario(args.scenario)
        doc = COMMANDS[args.command](args, sc, out)
    except StlrrtError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(doc, default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
