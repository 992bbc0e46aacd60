"""Command-line front end.

    equished solve CASE [--scale-p 2 --trip-gen 1 --beta 0.05 --out report.json]
    equished sweep CASE --beta-grid 0.05:0.05:1.0 --csv sweep.csv
    equished convert CASE.m OUT.json

CASE is a Matpower ``.m`` file, a native ``.json`` case, or
``builtin:case14`` for the bundled IEEE 14-bus case.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import EquishedError, SolverError, UnsupportedFeatureError
from .jsoncase import parse_json_case, serialize_json
from .matpower import builtin_case_text, parse_matpower_case
from .scenario import STUDY_PENALTY, ScenarioConfig, parse_beta_grid, solve_scenario, sweep_beta
from .solver import SolverOptions

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_case(path: str):
    if path.startswith("builtin:"):
        try:
            return parse_matpower_case(builtin_case_text(path.split(":", 1)[1]))
        except FileNotFoundError:
            raise UsageError(f"no bundled case named {path!r}") from None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"cannot read case file: {path}")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".json":
        return parse_json_case(text)
    return parse_matpower_case(text)


def _gen_list(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated generator numbers, got {text!r}")


def _add_scenario_args(p):
    p.add_argument("case", help="case path (.m or .json) or builtin:case14")
    p.add_argument("--scale-p", type=float, default=1.0, help="multiplier on real demand")
    p.add_argument("--scale-q", type=float, default=1.0, help="multiplier on reactive demand")
    p.add_argument("--trip-gen", type=_gen_list, default=(), help="1-based generator numbers to trip, e.g. 1,3")
    p.add_argument("--penalty", type=float, default=STUDY_PENALTY, help="load-shedding penalty, $/MWh")
    p.add_argument("--tol", type=float, default=1e-6, help="feasibility/optimality tolerance")
    p.add_argument("--max-iter", type=int, default=150)


def _options(args):
    return SolverOptions(feas_tol=args.tol, opt_tol=args.tol, comp_tol=args.tol, max_iter=args.max_iter)


def build_parser():
    parser = _Parser(prog="equished", description="Equity-aware AC load-shedding optimization")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve one scenario")
    _add_scenario_args(ps)
    eq = ps.add_mutually_exclusive_group()
    eq.add_argument("--beta", type=float, help="upper limit on the grid Gini coefficient")
    eq.add_argument("--no-equity", action="store_true", help="omit the equity constraint (default)")
    ps.add_argument("--out", help="write a JSON report here")

    pw = sub.add_parser("sweep", help="solve once per beta value")
    _add_scenario_args(pw)
    pw.add_argument("--beta-grid", required=True, help="start:step:end or comma-separated list")
    pw.add_argument("--csv", help="summary CSV path")
    pw.add_argument("--ori-csv", help="per-bus ORI matrix CSV (default: <csv stem>_ori.csv)")
    pw.add_argument("--workers", type=int, default=1, help="parallel solves")

    pc = sub.add_parser("convert", help="convert a Matpower case to native JSON")
    pc.add_argument("case")
    pc.add_argument("output")
    return parser


def _print_solution(sol, out):
    print(f"status: {sol.status}  iterations: {sol.iterations}  max residual: {sol.max_residual:.2e} pu", file=out)
    print("\nGenerator dispatch", file=out)
    print(f"{'bus':>5} {'P (MW)':>10} {'Q (MVAr)':>10}", file=out)
    for b, p, q in zip(sol.gen_buses, sol.p_gen, sol.q_gen):
        print(f"{b:>5} {p:10.2f} {q:10.2f}", file=out)
    print("\nLoad shedding", file=out)
    print(f"{'bus':>5} {'shed (MW)':>10} {'ORI':>8}", file=out)
    for b, s, o in zip(sol.load_bus_ids, sol.p_shed, sol.equity.ori):
        print(f"{b:>5} {s:10.3f} {o:8.4f}", file=out)
    print(f"\ntotal shed        {sol.total_shed:14.3f} MW", file=out)
    print(f"ORI mean          {sol.equity.ori_mean:14.4f}", file=out)
    print(f"GGC_OEI           {sol.equity.ggc:14.4f}", file=out)
    print(f"generation cost   {sol.generation_cost:14.2f} $/h", file=out)
    print(f"shed penalty      {sol.shed_penalty_cost:14.2f} $/h", file=out)
    print(f"total cost        {sol.total_cost:14.2f} $/h", file=out)


def cmd_solve(args, out=None):
    out = out or sys.stdout
    case = load_case(args.case)
    cfg = ScenarioConfig(
        load_p_scale=args.scale_p,
        load_q_scale=args.scale_q,
        tripped_gens=args.trip_gen,
        shed_penalty=args.penalty,
        beta=None if args.no_equity else args.beta,
    )
    sol = solve_scenario(case, cfg, _options(args))
    _print_solution(sol, out)
    if args.out:
        report = sol.as_dict()
        report["case"] = case.name
        Path(args.out).write_text(json.dumps(report, indent=2), encoding="utf-8")
    return EXIT_OK if sol.converged else EXIT_SOLVER


def cmd_sweep(args, out=None):
    out = out or sys.stdout
    case = load_case(args.case)
    try:
        grid = parse_beta_grid(args.beta_grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = ScenarioConfig(
        load_p_scale=args.scale_p,
        load_q_scale=args.scale_q,
        tripped_gens=args.trip_gen,
        shed_penalty=args.penalty,
    )
    result = sweep_beta(case, cfg, grid, _options(args), max_workers=args.workers)
    print(f"{'beta':>6} {'total cost':>16} {'gen cost':>12} {'shed (MW)':>10} {'GGC':>8}  status", file=out)
    for r in result.rows:
        status = "ok" if r.converged else (r.error or "not converged")
        print(f"{r.beta:6.3f} {r.total_cost:16.2f} {r.generation_cost:12.2f} {r.total_shed:10.3f} {r.ggc:8.4f}  {status}", file=out)
    if args.csv:
        result.write_csv(args.csv)
        ori_path = args.ori_csv or str(Path(args.csv).with_name(Path(args.csv).stem + "_ori.csv"))
        result.write_ori_csv(ori_path)
    elif args.ori_csv:
        result.write_ori_csv(args.ori_csv)
    return EXIT_OK if result.converged_rows() else EXIT_SOLVER


def cmd_convert(args, out=None):
    out = out or sys.stdout
    if not args.output.lower().endswith(".json"):
        raise UsageError("output path must end in .json")
    case = load_case(args.case)
    Path(args.output).write_text(serialize_json(case), encoding="utf-8")
    print(f"wrote {args.output}: {case.n_bus} buses, {len(case.generators)} generators, {len(case.branches)} branches", file=out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "convert": cmd_convert}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"equished: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnsupportedFeatureError as exc:
        print(f"equished: unsupported case content: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EquishedError as exc:
        code = EXIT_SOLVER if isinstance(exc, SolverError) else EXIT_USAGE
        print(f"equished: error: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"equished: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
