"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 structural refusal,
3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .graph import check_poly_conditions, plus_components
from .instance import InstanceError, build_graph, emit_instance, random_instance, read_instance
from .oracle import OracleError, global_min_boxqp
from .relax import (
    RelaxationError,
    build_relaxation,
    parse_psd2_spec,
    psd2_size_counts,
)
from .sdp import SdpError, export_sdpa, import_sdpa, lower, solve

EXIT_OK, EXIT_USAGE, EXIT_REFUSED, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sig4(v) -> str:
    if v is None:
        return "-"
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return f"{v:.4g}"


def _jsonable(v):
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


class _JsonSink:
    def __init__(self, target):
        self.target = target
        self.fh = None

    def emit(self, record: dict):
        if self.target is None:
            return
        if self.fh is None:
            self.fh = sys.stdout if self.target == "-" else open(self.target, "a", encoding="utf-8")
        self.fh.write(json.dumps({k: _jsonable(v) for k, v in record.items()}, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self):
        if self.fh is not None and self.fh is not sys.stdout:
            self.fh.close()


def _load(path):
    try:
        return read_instance(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except InstanceError as exc:
        raise UsageError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- check

def cmd_check(args, sink) -> int:
    inst = _load(args.instance)
    report = check_poly_conditions(build_graph(inst), width_cap=args.width_cap, degree_cap=args.degree_cap)
    comps = ", ".join(
        "{" + ",".join(map(str, sorted(c))) + "} N={" + ",".join(map(str, sorted(n))) + "}"
        for c, n in report.components
    )
    print(f"plus components    {comps or 'none'}")
    print(f"triplet            {'yes' if report.has_triplet else 'no'}")
    print(f"max plus degree    {report.max_plus_degree} (cap {report.degree_cap})")
    print(f"min-fill width     {report.width_bound} (cap {report.width_cap})")
    print(f"eliminated width   {report.eliminated_width_bound}")
    print(f"largest N(V_c)     {report.d_max}")
    print(f"poly_ok            {str(report.poly_ok).lower()}")
    for r in report.reasons:
        print(f"reason             {r}")
    sink.emit({"command": "check", "instance": args.instance, **report.to_dict()})
    return EXIT_OK if report.poly_ok else EXIT_REFUSED


# ---------------------------------------------------------------- build

def cmd_build(args, sink) -> int:
    inst = _load(args.instance)
    try:
        prog = build_relaxation(args.relaxation, inst)
    except RelaxationError as exc:
        msg = str(exc)
        if "triplet" in msg or "size guard" in msg:
            print(f"refused: {msg}", file=sys.stderr)
            return EXIT_REFUSED
        raise UsageError(msg) from None
    try:
        sdp = lower(prog)
    except SdpError as exc:
        print(f"lowering failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    nvars = len(prog.registry)
    print(f"relaxation   {prog.name}")
    print(f"variables    {nvars} registered, {sdp.m} after eliminating {len(prog.equalities)} equalities")
    print(f"blocks       {prog.size_summary() or 'none'}")
    record = {
        "command": "build",
        "instance": args.instance,
        "relaxation": args.relaxation,
        "variables": nvars,
        "free_variables": sdp.m,
        "equalities": len(prog.equalities),
        "blocks": {str(k): v for k, v in prog.block_counts().items()},
    }
    if args.relaxation.startswith("psd2:"):
        cfg = parse_psd2_spec(args.relaxation)
        counts = psd2_size_counts(len(cfg.plus), len(cfg.minus))
        print(
            f"formula      {counts['scalar_blocks']} scalar, {counts['lmi_blocks']} LMIs, "
            f"{counts['variables']} variables incl. constant"
        )
        record["formula"] = counts
    if args.pretty:
        sys.stdout.write(prog.pretty())
    if args.out:
        export_sdpa(sdp, args.out)
        print(f"wrote        {args.out}")
        record["out"] = args.out
    sink.emit(record)
    return EXIT_OK


# ---------------------------------------------------------------- compare

@dataclass
class CompareRow:
    name: str
    relaxation: str
    bound: float = math.nan
    status: str = ""
    iterations: int = 0
    seconds: float = 0.0
    gap: float | None = None
    message: str = ""


@dataclass
class CompareReport:
    instance: str
    rows: list = field(default_factory=list)
    oracle: object = None
    oracle_argmin: tuple | None = None

    def finalize(self):
        if self.oracle is None:
            return
        o = float(self.oracle)
        for r in self.rows:
            if math.isfinite(r.bound):
                r.gap = (o - r.bound) / max(1.0, abs(o))

    def render(self) -> str:
        head = f"{'relaxation':<14}{'bound':>12}{'gap':>12}  {'status':<18}{'iter':>5}{'time[s]':>9}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.name:<14}{_sig4(r.bound):>12}{_sig4(r.gap):>12}  {r.status:<18}{r.iterations:>5}{r.seconds:>9.3f}"
            )
        if self.oracle is not None:
            exact = ""
            if isinstance(self.oracle, Fraction) and self.oracle.denominator != 1:
                exact = f"  (= {self.oracle})"
            lines.append(f"{'oracle':<14}{_sig4(self.oracle):>12}{exact}")
        return "\n".join(lines)


def _solve_row(inst, g, name, relaxation, tol) -> CompareRow:
    row = CompareRow(name, relaxation)
    start = time.perf_counter()
    try:
        sdp = lower(build_relaxation(relaxation, inst, g))
        res = solve(sdp, tol=tol)
        row.bound = res.primal_objective
        row.status = res.status
        row.iterations = res.iterations
        row.message = res.message
    except (RelaxationError, SdpError) as exc:
        row.status = "error"
        row.message = str(exc)
    row.seconds = time.perf_counter() - start
    return row


def compare_rows(inst):
    g = build_graph(inst)
    new = "psd2-components" if any(len(c) >= 3 for c in plus_components(g)) else "exact"
    return g, [
        ("shor-mc-tri", "shor-mc-tri"),
        ("deyida", "deyida"),
        ("deyida+shor", "deyida+shor"),
        ("new", new),
    ]


def run_compare(inst, name="", with_oracle=False, tol=1e-8, jobs=1) -> CompareReport:
    g, rows = compare_rows(inst)
    report = CompareReport(name)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_solve_row, inst, g, n, r, tol) for n, r in rows]
            report.rows = [f.result() for f in futures]
    else:
        report.rows = [_solve_row(inst, g, n, r, tol) for n, r in rows]
    if with_oracle:
        sol = global_min_boxqp(inst)
        report.oracle = sol.value
        report.oracle_argmin = sol.argmin
    report.finalize()
    return report


def cmd_compare(args, sink) -> int:
    inst = _load(args.instance)
    try:
        report = run_compare(inst, args.instance, args.with_oracle, args.tol, args.jobs)
    except OracleError as exc:
        raise UsageError(str(exc)) from None
    print(report.render())
    for r in report.rows:
        sink.emit({
            "command": "compare", "instance": args.instance, "row": r.name, "relaxation": r.relaxation,
            "bound": r.bound, "status": r.status, "iterations": r.iterations, "seconds": r.seconds,
            "gap": r.gap, "oracle": report.oracle, "message": r.message,
        })
    if report.oracle is not None:
        sink.emit({
            "command": "compare", "instance": args.instance, "row": "oracle", "bound": report.oracle,
            "exact": str(report.oracle), "argmin": [str(v) for v in report.oracle_argmin],
        })
    return EXIT_OK if all(r.status == "optimal" for r in report.rows) else EXIT_SOLVER


# ---------------------------------------------------------------- gen / solve

def cmd_gen(args, sink) -> int:
    try:
        inst = random_instance(
            args.n, density=args.density, plus=args.plus, seed=args.seed,
            no_triplet=args.no_triplet, minus_fraction=args.minus_fraction,
        )
    except InstanceError as exc:
        raise UsageError(str(exc)) from None
    text = emit_instance(inst)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    sink.emit({"command": "gen", "n": inst.n, "seed": args.seed, "out": args.out,
               "coefficients": inst.num_coefficients})
    return EXIT_OK


def cmd_solve(args, sink) -> int:
    try:
        sdp = import_sdpa(args.sdpa)
    except OSError as exc:
        raise UsageError(f"cannot read {args.sdpa}: {exc.strerror}") from None
    except SdpError as exc:
        raise UsageError(f"{args.sdpa}: {exc}") from None
    res = solve(sdp, tol=args.tol)
    print(f"status     {res.status}")
    print(f"primal     {res.primal_objective:.10g}")
    print(f"dual       {res.dual_objective:.10g}")
    print(f"iterations {res.iterations}")
    sink.emit({"command": "solve", "file": args.sdpa, **res.to_dict()})
    return EXIT_OK if res.status == "optimal" else EXIT_SOLVER


# ---------------------------------------------------------------- main

def _tol(text):
    v = float(text)
    if not 0 < v <= 1e-3:
        raise argparse.ArgumentTypeError("tolerance must lie in (0, 1e-3]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rltsdp", description="RLT-strengthened SDP relaxations for sparse box QPs")
    p.add_argument("--json", metavar="PATH", help="append JSON-lines records to PATH ('-' for stdout)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="structural report on the loop graph")
    c.add_argument("instance")
    c.add_argument("--width-cap", type=int, default=10)
    c.add_argument("--degree-cap", type=int, default=12)

    b = sub.add_parser("build", help="build a relaxation and export it as SDPA")
    b.add_argument("instance")
    b.add_argument("--relaxation", "-r", default="exact",
                   help="shor | shor-mc | shor-mc-tri | deyida | deyida+shor | exact | "
                        "psd2-components | psd2:P=..,M=..")
    b.add_argument("--out", "-o", help="SDPA sparse output file")
    b.add_argument("--pretty", action="store_true", help="print the program")

    m = sub.add_parser("compare", help="solve the baseline and new relaxations side by side")
    m.add_argument("instance")
    m.add_argument("--with-oracle", action="store_true")
    m.add_argument("--tol", type=_tol, default=1e-8)
    m.add_argument("--jobs", type=int, default=1)

    gn = sub.add_parser("gen", help="generate a random instance")
    gn.add_argument("--n", type=int, required=True)
    gn.add_argument("--density", type=float, default=0.5)
    gn.add_argument("--plus", type=int, default=None)
    gn.add_argument("--seed", type=int, default=0)
    gn.add_argument("--no-triplet", action="store_true")
    gn.add_argument("--minus-fraction", type=float, default=0.5)
    gn.add_argument("--out", "-o")

    s = sub.add_parser("solve", help="solve an SDPA sparse file")
    s.add_argument("sdpa")
    s.add_argument("--tol", type=_tol, default=1e-8)
    return p


COMMANDS = {"check": cmd_check, "build": cmd_build, "compare": cmd_compare, "gen": cmd_gen, "solve": cmd_solve}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, parse errors exit 1
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    sink = _JsonSink(args.json)
    try:
        return COMMANDS[args.command](args, sink)
    except UsageError as exc:
        print(f"rltsdp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        sink.close()


if __name__ == "__main__":
    sys.exit(main())
