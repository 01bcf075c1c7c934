"""Command-line interface: ``python3 -m zonedispatch <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audit import audit_solution, audit_table, format_table, reports_to_json
from .io import ParseError, data_dir, load_case, load_reported, replicate_case, write_case
from .model import DispatchError, Infeasible, SystemCase, ValidationError
from .search import count_assignments, solve
from .subproblem import SolveOptions

log = logging.getLogger("zonedispatch")


def _cpu_ghz():
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.lower().startswith("cpu mhz"):
                return round(float(line.split(":")[1]) / 1000.0, 3)
    except (OSError, ValueError, IndexError):
        pass
    return None


def _prepare(case: SystemCase, args) -> SystemCase:
    if getattr(args, "no_loss", False):
        case = case.without_loss()
    if getattr(args, "no_valve", False):
        case = case.without_valve()
    return case


def _options(args) -> SolveOptions:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["rng_seed"] = args.seed
    if getattr(args, "starts", None) is not None:
        kw["n_starts"] = args.starts
    if getattr(args, "tol", None) is not None:
        kw["balance_tol"] = args.tol
    if getattr(args, "enum_threshold", None) is not None:
        kw["enum_threshold"] = args.enum_threshold
    return SolveOptions(**kw)


def run_report(case: SystemCase, sol, opts: SolveOptions, wall: float) -> dict:
    check = audit_solution(case, sol)
    has_ramp = any(u.p_prev is not None and (math.isfinite(u.ramp_up) or math.isfinite(u.ramp_down)) for u in case.units)
    st = sol.stats
    return {
        "case": case.name,
        "flags": {"loss": case.loss is not None, "valve": case.has_valve, "ramp": has_ramp},
        "solution": {
            "cost": sol.cost,
            "loss_mw": sol.loss_mw,
            "balance_residual": sol.balance_residual,
            "p_mw": [float(x) for x in sol.p],
            "zone_index": list(sol.assignment.zone_index),
            "reserve_mw": [float(x) for x in sol.reserve],
            "reserve_total_mw": float(np.sum(sol.reserve)),
            "converged": sol.converged,
            "solve_time_s": sol.solve_time,
            "search": {
                "path": st.path,
                "assignments_total": st.assignments_total,
                "assignments_solved": st.assignments_solved,
                "nodes_created": st.nodes_created,
                "nodes_pruned": st.nodes_pruned,
                "starts_used": st.starts_used,
                "bound_violation": st.bound_violation,
            },
        },
        "audit": {
            "calc_loss_mw": check.calc_loss,
            "violation_mw": check.violation,
            "recomputed_cost": check.recomputed_cost,
            "bound_violations": check.bound_violations,
            "ok": abs(check.violation) <= opts.balance_tol and not check.bound_violations,
        },
        "environment": {"cpu_ghz": _cpu_ghz(), "python": platform.python_version(), "wall_time_s": wall},
        "warnings": [] if sol.converged else ["iteration cap hit on every start of the best assignment"],
    }


def format_report(case: SystemCase, rep: dict) -> str:
    sol = rep["solution"]
    lines = [f"case: {case.name or '(unnamed)'}  units: {case.n_units}  demand: {case.demand:.4f} MW"]
    flags = rep["flags"]
    lines.append("conditions: " + ", ".join(f"{k} {'on' if v else 'off'}" for k, v in flags.items()))
    if case.n_units <= 60:
        lines.append(f"{'unit':>8} {'zone':>5} {'output MW':>12} {'reserve MW':>11}")
        for u, k, p, r in zip(case.units, sol["zone_index"], sol["p_mw"], sol["reserve_mw"]):
            lines.append(f"{u.id:>8} {k + 1:>5} {p:>12.4f} {r:>11.4f}")
    a = rep["audit"]
    lines.append(f"total output   {sum(sol['p_mw']):.4f} MW")
    lines.append(f"loss           {sol['loss_mw']:.4f} MW")
    lines.append(f"violation      {a['violation_mw']:.4f} MW".replace("-0.0000", "0.0000"))
    lines.append(f"cost           {sol['cost']:.2f} $/h")
    lines.append(f"reserve        {sol['reserve_total_mw']:.4f} MW (required {case.reserve_req:.4f})")
    s = sol["search"]
    lines.append(
        f"search         {s['path']}: {s['assignments_solved']} assignments solved, "
        f"{s['nodes_pruned']} nodes pruned, {s['starts_used']} starts"
    )
    lines.append(f"time           {sol['solve_time_s']:.3f} s")
    for w in rep["warnings"]:
        lines.append(f"WARNING: {w}")
    if not a["ok"]:
        lines.append("WARNING: audit self-check failed")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    case = load_case(args.case)
    zones = sum(u.n_zones for u in case.units)
    print(
        f"ok: {case.name or args.case}: {case.n_units} units, {zones} zones, "
        f"{count_assignments(case)} reachable assignments, loss {'on' if case.loss is not None else 'off'}, "
        f"valve {'on' if case.has_valve else 'off'}"
    )
    return 0


def cmd_solve(args) -> int:
    case = _prepare(load_case(args.case), args)
    opts = _options(args)
    t0 = time.perf_counter()
    sol = solve(case, opts)
    rep = run_report(case, sol, opts, time.perf_counter() - t0)
    if args.json:
        print(json.dumps(rep, indent=1))
    else:
        print(format_report(case, rep))
    if not sol.converged:
        log.warning("solution flagged as not converged")
    return 0


def cmd_audit(args) -> int:
    case = _prepare(load_case(args.case), args)
    rows = load_reported(args.reported)
    reports = audit_table(case, rows, act_ref=args.act_ref)
    print(reports_to_json(reports) if args.json else format_table(reports))
    return 0


def _check(expected: dict, rep: dict, case: SystemCase):
    sol = rep["solution"]
    fails = []
    for key, spec in expected.items():
        if key == "cost":
            got = sol["cost"]
        elif key == "loss_mw":
            got = sol["loss_mw"]
        elif key == "violation":
            got = rep["audit"]["violation_mw"]
        elif key == "p_mw":
            got = sol["p_mw"]
        elif key == "zones":
            ids = {u.id: i for i, u in enumerate(case.units)}
            for uid, k in spec["value"].items():
                if sol["zone_index"][ids[uid]] != k:
                    fails.append(f"unit {uid} zone {sol['zone_index'][ids[uid]]} != {k}")
            continue
        else:
            continue
        if "max" in spec and not got <= spec["max"]:
            fails.append(f"{key} {got:.4f} > {spec['max']:.4f}")
        if "value" in spec:
            diff = np.max(np.abs(np.asarray(got, float) - np.asarray(spec["value"], float)))
            if not diff <= spec.get("tol", 0.0):
                fails.append(f"{key} off by {diff:.4g} (tol {spec.get('tol', 0.0):g})")
    return fails


def cmd_bench(args) -> int:
    suite = Path(args.suite) if args.suite else data_dir() / "cases"
    paths = sorted(p for p in suite.glob("*.json") if not p.name.endswith(".expected.json"))
    if not paths:
        print(f"no case files in {suite}", file=sys.stderr)
        return 2
    opts = _options(args)
    rows, results, any_fail = [], [], False
    for path in paths:
        side = path.with_name(path.stem + ".expected.json")
        expected = json.loads(side.read_text()) if side.exists() else {}
        try:
            case = load_case(path)
            t0 = time.perf_counter()
            sol = solve(case, opts)
            rep = run_report(case, sol, opts, time.perf_counter() - t0)
        except DispatchError as exc:
            rows.append([path.stem, "-", "-", "-", "-", "-", f"ERROR {exc}"])
            any_fail = True
            continue
        fails = _check(expected, rep, case)
        any_fail |= bool(fails)
        status = "no reference" if not expected else ("PASS" if not fails else "FAIL: " + "; ".join(fails))
        ref = expected.get("cost", {})
        ref_txt = f"{ref['value']:.2f}" if "value" in ref else (f"<= {ref['max']:.2f}" if "max" in ref else "-")
        rows.append(
            [
                path.stem,
                f"{rep['solution']['cost']:.2f}",
                ref_txt,
                f"{rep['solution']['loss_mw']:.4f}",
                f"{rep['audit']['violation_mw'] + 0.0:.4f}".replace("-0.0000", "0.0000"),
                f"{rep['solution']['solve_time_s']:.2f}",
                status,
            ]
        )
        results.append({"case": path.stem, "report": rep, "expected": expected, "failures": fails})
    if args.json:
        print(json.dumps(results, indent=1))
    else:
        head = ["case", "cost $/h", "expected", "loss MW", "viol. MW", "time s", "status"]
        widths = [max(len(head[i]), *(len(r[i]) for r in rows)) for i in range(len(head) - 1)]
        for r in [head] + rows:
            print("  ".join([r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:-1], widths[1:])] + [r[-1]]))
    return 1 if any_fail else 0


def cmd_replicate(args) -> int:
    case = load_case(args.case)
    out = replicate_case(case, args.n)
    write_case(out, args.output)
    print(f"wrote {out.n_units} units, demand {out.demand:.4f} MW to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zonedispatch", description="Economic dispatch with prohibited operating zones.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a case file")
    p.add_argument("case")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve a case")
    p.add_argument("case")
    p.add_argument("--no-loss", action="store_true", help="drop the loss model")
    p.add_argument("--no-valve", action="store_true", help="drop valve-point terms")
    p.add_argument("--seed", type=int)
    p.add_argument("--starts", type=int, help="local-solver starts per assignment")
    p.add_argument("--tol", type=float, help="balance tolerance in MW")
    p.add_argument("--enum-threshold", type=int)
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--text", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("audit", help="re-evaluate reported dispatches against a case")
    p.add_argument("case")
    p.add_argument("reported")
    p.add_argument("--act-ref", type=float, help="reference CPU time in seconds for adjusted CPU time")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bench", help="solve every case in a directory and compare with sidecar expectations")
    p.add_argument("suite", nargs="?", help="directory of case files (default: bundled cases)")
    p.add_argument("--seed", type=int)
    p.add_argument("--starts", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replicate", help="write an n-fold replication of a lossless case")
    p.add_argument("case")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_replicate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except DispatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
