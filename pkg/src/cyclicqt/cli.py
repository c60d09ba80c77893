"""Command-line front end: demo, enumerate, verify, tables, sweep."""

from __future__ import annotations

import argparse
import math
import sys
from collections import Counter

from . import analysis, tables, verify
from .fock import TruncationError
from .harness import run_protocol
from .protocol import (
    LEG_NAMES,
    LEGS,
    ProtocolParams,
    TailBudgetError,
    dumps_json,
    enumerate_outcomes,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_THETA = (math.pi / 4,) * 3
RECEIVER_OWNER = {4: "Bob", 5: "Charlie", 6: "Alice"}


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, theta: bool = True) -> None:
    if theta:
        p.add_argument("--alpha", type=float, default=1.0, help="coherent amplitude (default 1)")
        p.add_argument("--theta", type=float, nargs=3, metavar=("T1", "T2", "T3"),
                       default=list(DEFAULT_THETA), help="input angles, cat = cos t|a> + sin t|-a>")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--cutoff", type=int, default=None, help="per-detector photon cutoff")
    p.add_argument("--tail", type=float, default=1e-9, help="allowed missing probability")
    p.add_argument("--out", default=None, help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclicqt", description="Cyclic teleportation of cat states over Bell coherent pairs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", help="one seeded three-party run")
    _common(p)
    p.set_defaults(func=cmd_demo, out_default="trace.jsonl")

    p = sub.add_parser("enumerate", help="every detection event with probability and fidelities")
    _common(p)
    p.set_defaults(func=cmd_enumerate, out_default="-")

    p = sub.add_parser("verify", help="coherent algebra against the truncated Fock oracle")
    _common(p, theta=False)
    p.add_argument("--alpha", type=float, nargs="+", default=None,
                   help=f"amplitudes to check (default {' '.join(map(str, verify.DEFAULT_ALPHAS))})")
    p.add_argument("--theta", type=float, nargs=3, default=None, metavar=("T1", "T2", "T3"),
                   help="one angle triple (default: five seeded triples)")
    p.add_argument("--samples", type=int, default=5,
                   help="full nine-mode events checked per point")
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify, out_default="-")

    p = sub.add_parser("tables", help="derived correction table and diff against the printed one")
    _common(p, theta=False)
    p.set_defaults(func=cmd_tables, out_default="-")

    p = sub.add_parser("sweep", help="branch and average fidelities over a parameter grid")
    _common(p, theta=False)
    p.add_argument("--alpha", type=float, nargs="+", default=[0.5, 1.0, 1.5, 2.0, 2.5])
    p.add_argument("--theta", type=float, nargs=3, default=None, metavar=("T1", "T2", "T3"),
                   help="fix all three angles instead of sweeping theta1")
    p.add_argument("--theta1", type=float, nargs="+", default=None,
                   help="theta1 grid (default five points on [0, pi])")
    p.add_argument("--convention", choices=analysis.CONVENTIONS, default="inverse_square")
    p.add_argument("--flatness", action="store_true",
                   help="add the average-fidelity flatness probe to the summary")
    p.set_defaults(func=cmd_sweep, out_default="sweep")
    return parser


def _params(args) -> ProtocolParams:
    try:
        return ProtocolParams(alpha=args.alpha, thetas=tuple(args.theta),
                              cutoff=args.cutoff, tail=args.tail)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def cmd_demo(args) -> int:
    params = _params(args)
    trace = run_protocol(params, args.seed)
    out = args.out or args.out_default
    print(f"alpha = {params.alpha:g}  theta = ({', '.join(f'{t:.4f}' for t in params.thetas)})"
          f"  seed = {args.seed}")
    print(f"detected (n7..n12) = {trace.event.counts}")
    print(f"case {trace.case.value}" + ("" if trace.failed else
          f"  parities {''.join('OE'[1 - p] for p in trace.parities)}"))
    for m in trace.messages:
        print(f"  {m.sender} -> {m.recipient}: counts {m.counts}")
    for k, leg in enumerate(LEGS):
        owner = RECEIVER_OWNER[leg.receiver]
        f = trace.fidelities[LEG_NAMES[k]]
        pair = trace.event.pairs[k]
        if sum(pair) == 0:
            tag = "not heralded"
        else:
            tag = "near faithful" if sum(pair) % 2 else "faithful"
        print(f"{LEG_NAMES[k]}  {owner:<7} mode {leg.receiver}  ops {trace.corrections[owner]:<2}"
              f"  F = {_fmt(f)} ({tag})")
    if trace.failed:
        print("run failed: a silent detector pair leaves the case undetermined")
    if out != "-":
        _write(out, trace.to_jsonl())
        print(f"trace written to {out}")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    params = _params(args)
    table = enumerate_outcomes(params)
    text = table.to_csv() if args.format == "csv" else dumps_json(table.to_json()) + "\n"
    _write(args.out or args.out_default, text)
    print(f"{len(table)} events, total mass {table.total_mass!r}, "
          f"ambiguous {table.ambiguous_mass!r}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    alphas = args.alpha or list(verify.DEFAULT_ALPHAS)
    if any(a > verify.MAX_ALPHA for a in alphas):
        raise UsageError(f"verify needs alpha <= {verify.MAX_ALPHA} (oracle truncation)")
    if any(not a > 0 for a in alphas):
        raise UsageError("alpha must be positive")
    thetas = [tuple(args.theta)] if args.theta else None
    try:
        checks = verify.run_checks(alphas, thetas, seed=args.seed, samples=args.samples,
                                   perturb=args.perturb, tail=args.tail)
    except TruncationError as exc:
        print(f"truncation budget exceeded: {exc} (suggested d = {exc.suggested_dim})",
              file=sys.stderr)
        return EXIT_FAIL
    worst = verify.worst_check(checks)
    ok = all(c.passed() for c in checks)
    if args.format == "json":
        _write(args.out or "-", dumps_json({"pass": ok, "tolerance": verify.TOLERANCE,
                                            "points": [c.to_json() for c in checks]}) + "\n")
    else:
        for c in checks:
            print(f"alpha {c.alpha:<4g} theta ({', '.join(f'{t:.4f}' for t in c.thetas)})  "
                  f"d {c.dim:<3} events {c.events:<7} max dev {c.max_deviation:.3e}  "
                  f"{'ok' if c.passed() else 'FAIL'}")
    where = (f"event {worst.prob_location}" if worst.prob_deviation >= worst.fid_deviation
             else f"leg {worst.fid_location[0]} pair counts {worst.fid_location[1]}")
    if worst.sample_deviation > max(worst.prob_deviation, worst.fid_deviation):
        where = f"sampled event {worst.sample_location}"
    print(f"max deviation {worst.max_deviation:.3e} at alpha {worst.alpha:g}, {where}",
          file=sys.stderr if args.format == "json" else sys.stdout)
    print("PASS" if ok else "FAIL", file=sys.stderr if args.format == "json" else sys.stdout)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_tables(args) -> int:
    derived = tables.derived_table()
    printed = tables.printed_table()
    diffs = tables.diff_tables(printed, derived)
    kinds = Counter(m.kind for m in diffs)
    if args.format == "json":
        text = dumps_json({"derived": tables.table_rows_json(derived),
                           "printed": tables.table_rows_json(printed),
                           "mismatches": tables.mismatches_json(diffs),
                           "summary": dict(kinds)}) + "\n"
    else:
        faithful = sum(r.faithful for r in derived)
        text = (tables.format_table(derived) + "\n\n"
                + f"{len(derived)} rows, {faithful} faithful\n\n"
                + tables.format_mismatches(diffs) + "\n\n"
                + f"{len(diffs)} mismatches: "
                + ", ".join(f"{n} {k}" for k, n in sorted(kinds.items())) + "\n")
    _write(args.out or args.out_default, text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.theta is not None:
        t1, t2, t3 = ([t] for t in args.theta)
    else:
        t1 = args.theta1 or [i * math.pi / 4 for i in range(5)]
        t2 = t3 = [math.pi / 4]
    try:
        spec = analysis.SweepSpec(alphas=tuple(args.alpha), theta1=tuple(t1), theta2=tuple(t2),
                                  theta3=tuple(t3), convention=args.convention, tail=args.tail)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = analysis.run_sweep(spec)
    if args.flatness:
        probe = analysis.flatness_probe(alphas=spec.alphas, theta1=spec.theta1)
        result.summary["flatness"] = probe.to_json()
        result.summary["notes"].append(
            f"average A->B fidelity varies by up to {probe.spread:.6f} across theta1")
    out = args.out or args.out_default
    if out == "-":
        sys.stdout.write(result.to_csv() if args.format == "csv"
                         else dumps_json(result.summary) + "\n")
    else:
        result.write(out + ".csv", out + ".json")
        print(f"{len(result.rows)} rows written to {out}.csv, summary to {out}.json")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TailBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
