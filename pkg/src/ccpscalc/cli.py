"""Command-line driver.

Subcommands: parse, simulate, explore, reach, bisim, find-trace, props,
check-time.  Exit codes: 0 success (bisim: bisimilar / find-trace: found),
1 negative verdict (not bisimilar / no trace / property findings),
2 any error, with a diagnostic on stderr.  Randomised commands require an
explicit seed so runs are reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys

from ccpscalc.terms import CcpsError, fmt_rat
from ccpscalc.physics import Cps
from ccpscalc.lts import trace_to_csv, trace_to_json
from ccpscalc.abstraction import (
    DEADLOCK, build_abstract_lts, build_bounded_lts, reach_envelope,
    lts_to_text, format_action,
)
from ccpscalc.analysis import (
    weak_bisim, find_trace_to, check_time_properties, monte_carlo,
)
from ccpscalc.casestudy import proposition_suite
from ccpscalc.dsl import parse_model_file, print_model


def _load(path: str) -> Cps:
    return parse_model_file(path).cps


def cmd_parse(args) -> int:
    model = parse_model_file(args.file)
    sys.stdout.write(print_model(model))
    return 0


def cmd_simulate(args) -> int:
    m = _load(args.file)
    stats = monte_carlo(m, args.runs, args.horizon, args.seed)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(stats.to_csv())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(stats.to_json_dict(), fh, indent=2)
    d = stats.to_json_dict()
    print(f"runs {d['runs']}  horizon {d['horizon']}")
    print(f"coolant-on fraction: {d['coolantOnFraction']}")
    print(f"switch-on events {len(d['turnOnTemps'])}  "
          f"switch-off events {len(d['turnOffTemps'])}")
    print(f"warnings {d['warningsEmitted']}  deadlocks {d['deadlocks']}")
    return 0


def cmd_explore(args) -> int:
    m = _load(args.file)
    if args.depth is not None:
        lts = build_bounded_lts(m, args.depth, args.max_states)
    else:
        lts = build_abstract_lts(m, args.max_states, policy=args.policy)
    acts = sorted({format_action(a) for a in lts.actions()})
    dead = lts.deadlock_indices()
    print(f"states {lts.num_states}  edges {len(lts.edges)}")
    print(f"actions: {', '.join(acts)}")
    print(f"deadlock states: {len(dead)}")
    if getattr(lts, "widened", False):
        print("widening: interval hull applied")
    if args.export:
        with open(args.export, "w", encoding="utf-8") as fh:
            fh.write(lts_to_text(lts))
    return 0


def cmd_reach(args) -> int:
    m = _load(args.file)
    lts = build_abstract_lts(m, args.max_states)
    env = reach_envelope(lts, args.where)
    for x in sorted(env):
        print(f"{x} in {env[x]}")
    return 0


def cmd_bisim(args) -> int:
    l1 = build_abstract_lts(_load(args.file1), args.max_states)
    l2 = build_abstract_lts(_load(args.file2), args.max_states)
    verdict = weak_bisim(l1, l2)
    if verdict.bisimilar:
        print(f"bisimilar (relation over {len(verdict.relation)} state pairs)")
        return 0
    witness = " ".join(format_action(a) for a in verdict.witness)
    print("not bisimilar")
    print(f"witness ({verdict.witness_kind}, performed by system {verdict.witness_side}): "
          f"{witness}")
    return 1


def cmd_find_trace(args) -> int:
    m = _load(args.file)
    found = find_trace_to(m, args.target, args.bound)
    if found is None:
        print(f"no trace to {args.target!r} within {args.bound} ticks")
        return 1
    last = found.records[-1]
    print(f"trace found: target in time slot {found.target_slot}, "
          f"{len(found.records)} steps")
    for r in found.records:
        extra = f" {r.channel}<{r.value}>" if r.channel else ""
        state = " ".join(f"{k}={v}" for k, v in r.perVariableState.items())
        print(f"  [{r.timeSlot:3}] {r.action}{extra}  {state}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(trace_to_csv(found.records))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(trace_to_json(found.records))
    return 0


def cmd_props(args) -> int:
    report = proposition_suite()
    for line in report.lines():
        print(line)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2)
    return 0 if report.all_pass else 1


def cmd_check_time(args) -> int:
    m = _load(args.file)
    report = check_time_properties(m, depth=args.depth, samples=args.samples,
                                   seed=args.seed)
    d = report.to_json_dict()
    for prop, ok in d["properties"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {prop}")
    print(f"states checked: {report.states_checked}")
    for f in report.findings:
        print(f"  counterexample [{f.prop}] {f.detail} at {f.state}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(d, fh, indent=2)
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccps", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="validate a model file and pretty-print it")
    p.add_argument("file")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("simulate", help="seeded Monte-Carlo campaign")
    p.add_argument("file")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("explore", help="build the abstract LTS and report stats")
    p.add_argument("file")
    p.add_argument("--depth", type=int, default=None,
                   help="exact exploration bounded by this many ticks")
    p.add_argument("--policy", choices=("hull", "exact"), default="hull")
    p.add_argument("--max-states", type=int, default=20000)
    p.add_argument("--export", help="write the LTS in text format")
    p.set_defaults(fn=cmd_explore)

    p = sub.add_parser("reach", help="reachable envelope per variable")
    p.add_argument("file")
    p.add_argument("--where", required=True,
                   help="state query, e.g. turn_on or write:cool=off")
    p.add_argument("--max-states", type=int, default=20000)
    p.set_defaults(fn=cmd_reach)

    p = sub.add_parser("bisim", help="weak bisimilarity of two models")
    p.add_argument("file1")
    p.add_argument("file2")
    p.add_argument("--max-states", type=int, default=20000)
    p.set_defaults(fn=cmd_bisim)

    p = sub.add_parser("find-trace", help="search for a trace to a target action")
    p.add_argument("file")
    p.add_argument("--target", required=True, help='e.g. "out warning"')
    p.add_argument("--bound", type=int, required=True, help="tick budget")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(fn=cmd_find_trace)

    p = sub.add_parser("props", help="run the case-study property suite")
    p.add_argument("--json")
    p.set_defaults(fn=cmd_props)

    p = sub.add_parser("check-time", help="timing-property oracle")
    p.add_argument("file")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--json")
    p.set_defaults(fn=cmd_check_time)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except CcpsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
