"""Command-line driver.

    raretrack run SCENARIO -o DIR
    raretrack converge SCENARIO --n 50,100,200,400 [--post]
    raretrack compare SCENARIO --cells 400,800,1600

Exit codes: 0 success, 2 invalid input, 3 solver abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from typing import Sequence

import numpy as np

from raretrack import front as front_mod
from raretrack import oracle
from raretrack.front import RunDiagnostics, SolverError, total_area
from raretrack.postprocess import (ERROR_SAMPLES, PLOT_SAMPLES, count_shocks, evaluate,
        l1_distance, sharpen_shocks, write_polyline_csv)
from raretrack.scenario import (Scenario, ScenarioError, error_table, observed_order,
        oracle_solution, parse_reference, reference_polyline, reference_window, simulate)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3

log = logging.getLogger("raretrack")


class InputError(Exception):
    pass


def _ints(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 2 for v in vals):
        raise argparse.ArgumentTypeError("need integers >= 2")
    return vals


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _time_tag(t: float) -> str:
    return repr(float(t))


class EventLog:
    """Observer writing one JSON line per event."""

    def __init__(self, fh):
        self.fh = fh

    def __call__(self, event, snap) -> None:
        rec = {"kind": event.kind, "t": float(event.t), "particles": len(snap),
                "info": _jsonable(event.info)}
        self.fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _load(path: str) -> Scenario:
    try:
        return Scenario.load(path)
    except ScenarioError as exc:
        raise InputError(str(exc)) from None


def _dump_failure(exc: SolverError, where: str) -> str:
    os.makedirs(where, exist_ok=True)
    path = os.path.join(where, "solver_dump.json")
    with open(path, "w") as fh:
        json.dump({"error": str(exc), "dump": _jsonable(getattr(exc, "dump", {}))}, fh, indent=2,
                sort_keys=True, default=repr)
    return path


def _write_rows(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# {{{ run

def cmd_run(args, hooks) -> int:
    sc = _load(args.scenario)
    n = args.n or sc.n
    out = args.output
    os.makedirs(out, exist_ok=True)
    flux = sc.build_flux()
    flux.counter.reset()
    front = sc.initial_front(n, flux)
    area0 = total_area(front)
    rec = RunDiagnostics.for_front(front, hooks=hooks)
    src = sc.build_source()
    files = []
    shocks = {}
    start = time.perf_counter()
    for t in sc.times:
        front = front_mod.run(front, t, rec, source=src, rk_substep=sc.rk_substep, dt_cap=sc.dt_cap)
        tag = _time_tag(t)
        name = f"raw_t{tag}.csv"
        write_polyline_csv(os.path.join(out, name), evaluate(front, args.samples))
        files.append(name)
        if sc.postprocess:
            sharp = sharpen_shocks(front)
            name = f"sharpened_t{tag}.csv"
            write_polyline_csv(os.path.join(out, name), evaluate(sharp, args.samples))
            files.append(name)
        shocks[tag] = count_shocks(front)
        log.info("t=%s: %d particles, %d shocks", tag, len(front), shocks[tag])
    wall = time.perf_counter() - start

    levels = rec.levels.k if rec.levels is not None else np.zeros(0)
    header = (["event", "kind", "t", "area", "ledger", "tv"]
            + [f"entropy_{j}" for j in range(len(levels))]
            + ["particles", "f_evals", "df_evals", "ddf_evals"])
    rows = []
    for j, r in enumerate(rec.records):
        ent = list(r.entropies) if r.entropies is not None else []
        rows.append([j, r.kind, r.t, r.area, r.ledger, r.tv] + ent
                + [r.particles, r.evals["f"], r.evals["df"], r.evals["ddf"]])
    _write_rows(os.path.join(out, "diagnostics.csv"), header, rows)

    management = [k for k in rec.event_counts() if k not in ("start", "advance", "end")]
    summary = {
        "scenario": sc.name,
        "particles_requested": n,
        "t_end": sc.t_end,
        "output_times": sc.times,
        "initial_area": area0,
        "final_area": total_area(front),
        "ledger": front.ledger,
        "conservation_error": total_area(front) - front.ledger,
        "source_integral": front.source_integral,
        "final_particles": len(front),
        "event_counts": rec.event_counts(),
        "max_event_drift": rec.max_event_drift(tuple(management)),
        "max_tv_increase": _tv_increase(rec, sc.source is not None),
        "entropy_levels": list(levels),
        "shock_counts": shocks,
        "flux_evaluations": flux.counter.snapshot(),
        "wall_time": wall,
        "files": files + ["diagnostics.csv"],
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
    log.info("wrote %d files to %s in %.2f s", len(files) + 2, out, wall)
    return EXIT_OK


def _tv_increase(rec: RunDiagnostics, source: bool) -> float:
    # with a source the characteristic motion may legitimately raise the
    # variation; only management events are held to it then
    worst = 0.0
    for a, b in rec.steps():
        if source and b.kind == "advance":
            continue
        worst = max(worst, b.tv - a.tv)
    return worst

# }}}


# {{{ converge and compare

def _reference_for(sc: Scenario, text: str | None) -> dict:
    if text:
        try:
            return parse_reference(text)
        except (ScenarioError, ValueError) as exc:
            raise InputError(str(exc)) from None
    return dict(sc.reference or {"type": "oracle", "factor": 16})


def _study_time(sc: Scenario, ref: dict, t: float | None) -> float:
    if t is not None:
        return float(t)
    return float(ref.get("time", sc.t_end))


def cmd_converge(args, hooks) -> int:
    sc = _load(args.scenario)
    ns = sorted(args.n)
    if len(ns) < 3:
        raise InputError("a convergence study needs at least three resolutions")
    ref = _reference_for(sc, args.reference)
    t = _study_time(sc, ref, args.time)
    post = args.post or sc.postprocess
    try:
        reference = reference_polyline(sc, t, max(ns), ref)
    except (oracle.OracleError, KeyError, TypeError) as exc:
        raise InputError(f"reference unavailable at t={t}: {exc}") from None
    rows = error_table(sc, ns, t, ref, post=post, reference=reference)
    order_raw = observed_order([r.d_max for r in rows], [r.raw for r in rows])
    order_sharp = (observed_order([r.d_max for r in rows], [r.sharp for r in rows])
            if post and all(r.sharp > 0 for r in rows) else None)
    result = {
        "scenario": sc.name, "time": t, "reference": ref, "window": list(reference_window(sc, ref)),
        "rows": [{"n": r.n, "d_max": r.d_max, "error_raw": r.raw, "error_sharpened": r.sharp}
                for r in rows],
        "order_raw": order_raw, "order_sharpened": order_sharp,
    }
    header = ["n", "d_max", "error_raw"] + (["error_sharpened"] if post else [])
    table = [[r.n, r.d_max, r.raw] + ([r.sharp] if post else []) for r in rows]
    table.append(["order", "", order_raw] + ([order_sharp if order_sharp is not None else ""]
            if post else []))
    _emit_table(args, "converge", header, table, result)
    return EXIT_OK


def cmd_compare(args, hooks) -> int:
    sc = _load(args.scenario)
    cells = sorted(args.cells)
    ref = _reference_for(sc, None)
    t = _study_time(sc, ref, args.time)
    n = args.n or sc.n
    front = simulate(sc, n, times=[t])[t]
    if sc.postprocess:
        front = sharpen_shocks(front)
    particle = evaluate(front, ERROR_SAMPLES)
    window = reference_window(sc, ref)
    rows = []
    for m in cells:
        g = oracle_solution(sc, t, m, ref).polyline()
        rows.append((m, l1_distance(particle, g, window)))
    plateau = rows[-1][1]
    change = abs(rows[-1][1] - rows[-2][1]) / plateau if len(rows) > 1 and plateau > 0 else None
    result = {"scenario": sc.name, "time": t, "n": n, "window": list(window),
            "rows": [{"cells": m, "l1": e} for m, e in rows],
            "plateau": plateau, "plateau_relative_change": change}
    table = [list(r) for r in rows] + [["plateau", plateau]]
    _emit_table(args, "compare", ["cells", "l1"], table, result)
    return EXIT_OK


def _emit_table(args, stem: str, header, table, result) -> None:
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        _write_rows(os.path.join(args.output, f"{stem}.csv"), header, table)
        with open(os.path.join(args.output, f"{stem}.json"), "w") as fh:
            json.dump(_jsonable(result), fh, indent=2, sort_keys=True)
    if not args.quiet:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for r in table:
            w.writerow([f"{v:.6e}" if isinstance(v, float) else v for v in r])

# }}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raretrack",
            description="Particle method for 1D scalar conservation laws")
    p.add_argument("--quiet", action="store_true", help="no progress output")
    p.add_argument("--log-events", metavar="PATH", help="write every event as a JSON line")
    # the global flags are accepted after the subcommand as well
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--log-events", metavar="PATH", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run a scenario and write CSV/JSON output")
    r.add_argument("scenario")
    r.add_argument("-o", "--output", required=True, help="output directory")
    r.add_argument("--n", type=int, help="particle count (default: from the scenario)")
    r.add_argument("--samples", type=int, default=PLOT_SAMPLES,
            help="polyline samples per segment")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("converge", parents=[common], help="L1 error over several resolutions")
    c.add_argument("scenario")
    c.add_argument("--n", type=_ints, default=[50, 100, 200, 400], help="e.g. 50,100,200,400")
    c.add_argument("--post", action="store_true", help="also report sharpened errors")
    c.add_argument("--time", type=float, help="study time (default: scenario reference or t_end)")
    c.add_argument("--reference", help="oracle[:factor], cells:<count> or analytic:<name>")
    c.add_argument("-o", "--output", help="directory for converge.csv and converge.json")
    c.set_defaults(func=cmd_converge)

    m = sub.add_parser("compare", parents=[common], help="fixed particle run against oracles of varying size")
    m.add_argument("scenario")
    m.add_argument("--cells", type=_ints, required=True, help="e.g. 400,800,1600")
    m.add_argument("--n", type=int, help="particle count (default: from the scenario)")
    m.add_argument("--time", type=float)
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_compare)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
            format="%(message)s", stream=sys.stderr)
    hooks = []
    fh = None
    try:
        if args.log_events:
            if os.path.dirname(args.log_events):
                os.makedirs(os.path.dirname(args.log_events), exist_ok=True)
            fh = open(args.log_events, "w")
            hooks.append(EventLog(fh))
        return args.func(args, hooks)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        where = getattr(args, "output", None) or os.getcwd()
        path = _dump_failure(exc, where)
        print(f"solver aborted: {exc}\ndiagnostic dump: {path}", file=sys.stderr)
        return EXIT_SOLVER
    finally:
        if fh is not None:
            fh.close()


if __name__ == "__main__":
    sys.exit(main())
