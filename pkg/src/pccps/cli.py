"""Command-line driver.

Exit codes: 0 success, 1 a checked property or verdict failed, 2 usage
error (argparse's own convention), 3 a resource limit or truncation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import casestudy, explore, metric, modeldsl
from .explore import TruncationError, WellTimednessError
from .physics import ModelError
from .semantics import DEAD, Label

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3


def _load(path: str):
    try:
        _, cps = modeldsl.load_model(path)
        return cps
    except FileNotFoundError:
        print(f"error: no such file: {path}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    except (modeldsl.ParseError, modeldsl.BuildError, ModelError) as e:
        print(f"error: {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_VERDICT)


def cmd_parse(args) -> int:
    try:
        with open(args.file, "r", encoding="utf-8") as fh:
            mf = modeldsl.parse_model(fh.read())
        modeldsl.build(mf)
    except FileNotFoundError:
        print(f"error: no such file: {args.file}", file=sys.stderr)
        return EXIT_USAGE
    except (modeldsl.ParseError, modeldsl.BuildError, ModelError) as e:
        print(f"{args.file}: {e}")
        return EXIT_VERDICT
    print(f"{args.file}: ok")
    return EXIT_OK


def _explore(m, max_states):
    try:
        return explore.reachable(m, max_states=max_states)
    except WellTimednessError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_VERDICT)
    except TruncationError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_RESOURCE)


def cmd_lts(args) -> int:
    m = _load(args.file)
    plts = _explore(m, args.max_states)
    n_edges = sum(len(e) for e in plts.edges)
    n_dead = sum(1 for s in plts.states if s is DEAD)
    print(f"states: {len(plts.states)}")
    print(f"transitions: {n_edges}")
    print(f"dead reachable: {'yes' if n_dead else 'no'}")
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(_dot(plts))
        print(f"graph written to {args.dot}")
    return EXIT_OK


def _dot(plts) -> str:
    lines = ["digraph plts {"]
    for i, s in enumerate(plts.states):
        label = "Dead" if s is DEAD else f"s{i}"
        lines.append(f'  {i} [label="{label}"];')
    for i, edges in enumerate(plts.edges):
        for action, dist in edges:
            for j, w in dist:
                lines.append(f'  {i} -> {j} [label="{action!r} {w}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_timecheck(args) -> int:
    m = _load(args.file)
    plts = _explore(m, args.max_states)
    report = explore.check_time_properties(plts)
    for clause in ("determinism", "maximal_progress", "patience", "well_timedness"):
        ok = getattr(report, clause)
        extra = ""
        if not ok and clause in report.witness:
            extra = f" (witness state {report.witness[clause]})"
        print(f"{clause}: {'pass' if ok else 'FAIL'}{extra}")
    if report.max_untimed_run is not None:
        print(f"max untimed run: {report.max_untimed_run}")
    return EXIT_OK if report.all_pass else EXIT_VERDICT


def cmd_simulate(args) -> int:
    m = _load(args.file)
    g = m.env.granularity
    rows_out = []
    for r in range(args.runs):
        trace = explore.sample_trace(m, args.slots, seed=args.seed + r)
        rows = explore.trace_csv_rows(m, trace, g)
        if r == 0:
            rows_out.extend(rows)
        else:
            rows_out.append(f"# seed={trace.seed}")
            rows_out.extend(rows[2:])
    payload = "\n".join(rows_out) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
        print(f"{args.runs} runs x {args.slots} slots written to {args.out}")
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_barb(args) -> int:
    m = _load(args.file)
    try:
        result = explore.find_barb(m, args.channel, max_slots=args.max_slots)
    except (WellTimednessError, TruncationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    if result.found:
        last = result.trace.steps[-1]
        print(f"barb on {args.channel!r} reachable in slot {last.slot}")
        for step in result.trace.steps:
            print(f"  slot {step.slot}: {step.action!r}")
        return EXIT_OK
    if result.conclusive:
        print(f"no barb on {args.channel!r} anywhere in the reachable space")
        return EXIT_OK
    print(f"no barb on {args.channel!r} within the explored bound (inconclusive)")
    return EXIT_RESOURCE


def cmd_metric(args) -> int:
    m1, m2 = _load(args.file1), _load(args.file2)
    eps = args.tol if args.float else 0
    try:
        if args.limit:
            run = metric.distance_limit(m1, m2, n_max=args.n)
        else:
            run = metric.distance_n(m1, m2, args.n)
    except metric.ScaleError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    if eps:
        # float surface for exploratory runs; the engine itself is exact
        print(f"distance at n={args.n}: {float(run.value):.12g} (tol {args.tol})")
    payload = run.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        print(f"report written to {args.out}")
    else:
        print(payload)
    return EXIT_OK


def cmd_bisim(args) -> int:
    m1, m2 = _load(args.file1), _load(args.file2)
    try:
        verdict = metric.check_bisimilar(m1, m2, n_max=args.n_max)
    except metric.ScaleError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    if verdict.distinct:
        v = verdict.value
        print(
            f"distinct at n={verdict.distinct_at}: distance "
            f"{v.numerator}/{v.denominator}"
        )
        if verdict.witness:
            print(f"witness action: {verdict.witness.get('action')}")
        return EXIT_VERDICT if args.expect_bisimilar else EXIT_OK
    print(f"bisimilar up to n={verdict.bisimilar_up_to} (semi-verdict)")
    return EXIT_OK


def cmd_casestudy(args) -> int:
    kind = args.model
    try:
        text = casestudy.model_source(kind, args.g)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.emit:
        with open(args.emit, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"{kind} (g={args.g}) written to {args.emit}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pccps",
        description="Probabilistic cyber-physical systems: transition "
        "semantics, clock checks, simulation, and behavioural distances.",
    )
    ap.add_argument(
        "--jobs",
        type=int,
        default=int(os.environ.get("PCCPS_JOBS", "1")),
        help="worker cap (the current engines are deterministic and single-process)",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and validate a model file")
    p.add_argument("file")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("lts", help="explore the reachable transition system")
    p.add_argument("file")
    p.add_argument("--max-states", type=int, default=2_000_000)
    p.add_argument("--dot", help="write a graph dump to this path")
    p.set_defaults(fn=cmd_lts)

    p = sub.add_parser("timecheck", help="check the four clock disciplines")
    p.add_argument("file")
    p.add_argument("--max-states", type=int, default=2_000_000)
    p.set_defaults(fn=cmd_timecheck)

    p = sub.add_parser("simulate", help="seeded trace sampling to CSV")
    p.add_argument("file")
    p.add_argument("--slots", type=int, required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("barb", help="shortest trace reaching an output barb")
    p.add_argument("file")
    p.add_argument("--channel", required=True)
    p.add_argument("--max-slots", type=int, default=None)
    p.set_defaults(fn=cmd_barb)

    p = sub.add_parser("metric", help="n-step behavioural distance")
    p.add_argument("file1")
    p.add_argument("file2")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--limit", action="store_true",
                   help="iterate to the exact fixed point (or n as a cap)")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--rational", action="store_true", default=True,
                   help="exact rational arithmetic (default)")
    p.add_argument("--float", action="store_true",
                   help="float surface for large exploratory runs")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(fn=cmd_metric)

    p = sub.add_parser("bisim", help="behavioural equivalence semi-decision")
    p.add_argument("file1")
    p.add_argument("file2")
    p.add_argument("--n-max", type=int, default=32)
    p.add_argument("--expect-bisimilar", action="store_true",
                   help="exit 1 when the systems are distinct")
    p.set_defaults(fn=cmd_bisim)

    p = sub.add_parser("casestudy", help="emit a built-in model file")
    p.add_argument(
        "model",
        choices=["engine", "engine-tilde", "engine-hat", "airplane"],
    )
    p.add_argument("--g", type=int, default=1)
    p.add_argument("--emit", help="output path (default stdout)")
    p.set_defaults(fn=cmd_casestudy)

    return ap


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.fn(args)


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
