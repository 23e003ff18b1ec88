"""Command line entry point: ``adaptmw run | bench | dir | scenarios``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .directory import (INSTANCE, TEMPLATE, TYPE, Directory, NeedDescriptor,
                        OfferDescriptor, parse_rules)
from .environment import parse_environment
from .errors import MiddlewareError, ScenarioParseError, TraceMismatch
from .personality import Personality

EXIT_OK, EXIT_MISMATCH, EXIT_ERROR = 0, 1, 2


def _read(path):
    return Path(path).read_text(encoding="utf-8")


def cmd_run(args) -> int:
    from .harness.scenario import run_scenario
    expect = _read(args.expect) if args.expect else None
    status = EXIT_OK
    try:
        result = run_scenario(args.scenario, expect=expect)
    except TraceMismatch as exc:
        result = exc.result
        sys.stderr.write(f"{exc}\n{exc.diff}")
        status = EXIT_MISMATCH
    if args.trace_out:
        Path(args.trace_out).write_text(result.trace, encoding="utf-8")
    else:
        sys.stdout.write(result.trace)
    return status


def cmd_scenarios(args) -> int:
    from .harness.scenario import bundled_scenarios
    for name in bundled_scenarios():
        print(name)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .harness.bench import bench_interception
    report = bench_interception(args.calls, args.chain, args.repetitions)
    print("\n".join(report.lines()))
    return EXIT_OK


def _load_store(path) -> Directory:
    return Directory.load(path) if Path(path).exists() else Directory()


def cmd_dir(args) -> int:
    directory = _load_store(args.store)
    changed = True
    if args.action == "import":
        offer = OfferDescriptor.from_xml(_read(args.offer)) if args.offer else None
        personality = Personality.from_xml(_read(args.personality)) if args.personality else None
        adl = _read(args.adl) if args.adl else ""
        kind = {"type": TYPE, "template": TEMPLATE, "instance": INSTANCE}[args.kind]
        print(directory.import_(kind, args.id, args.parent, offer, adl, personality))
    elif args.action == "rule":
        text = _read(args.file) if args.file else "\n".join(args.rule)
        for rule in parse_rules(text):
            directory.add_rule(rule)
            print(rule)
    elif args.action == "remove":
        directory.remove(args.path)
    elif args.action == "query":
        need = NeedDescriptor.from_xml(_read(args.need))
        env = parse_environment(_read(args.env))
        before = directory.size()
        for inst in directory.export_query(need, env, args.service):
            print(inst.path)
        changed = directory.size() != before
    else:
        sys.stdout.write(directory.show())
        changed = False
    if changed:
        directory.save(args.store)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptmw",
                                     description="Environment-aware technical services.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and print its trace")
    run.add_argument("scenario", help="scenario file or directory, or a bundled scenario name")
    run.add_argument("--trace-out", metavar="PATH", help="write the trace here instead of stdout")
    run.add_argument("--expect", metavar="PATH", help="expected trace; exit 1 if it differs")
    run.set_defaults(func=cmd_run)

    sc = sub.add_parser("scenarios", help="list bundled scenarios")
    sc.set_defaults(func=cmd_scenarios)

    bench = sub.add_parser("bench", help="measure interception overhead")
    bench.add_argument("--calls", type=int, default=1_000_000)
    bench.add_argument("--chain", type=int, default=1, help="pass-through interceptors")
    bench.add_argument("--repetitions", type=int, default=5)
    bench.set_defaults(func=cmd_bench)

    d = sub.add_parser("dir", help="manipulate a directory stored as JSON")
    d.add_argument("--store", default="directory.json", metavar="PATH")
    dsub = d.add_subparsers(dest="action", required=True)
    imp = dsub.add_parser("import", help="add a type, template or instance")
    imp.add_argument("kind", choices=["type", "template", "instance"])
    imp.add_argument("id")
    imp.add_argument("--parent", default="/")
    imp.add_argument("--offer", metavar="XML")
    imp.add_argument("--personality", metavar="XML")
    imp.add_argument("--adl", metavar="FILE")
    q = dsub.add_parser("query", help="rank instances for a need")
    q.add_argument("--need", required=True, metavar="XML")
    q.add_argument("--env", required=True, metavar="XML")
    q.add_argument("--service")
    rule = dsub.add_parser("rule", help="add adaptation rules")
    rule.add_argument("rule", nargs="*", help='e.g. "rule transaction: a > b"')
    rule.add_argument("--file")
    rm = dsub.add_parser("remove", help="remove a subtree")
    rm.add_argument("path")
    dsub.add_parser("show", help="print the tree and rules")
    d.set_defaults(func=cmd_dir)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        sys.stderr.write(f"adaptmw: {exc}\n")
        return EXIT_ERROR
    except (MiddlewareError, ValueError, OSError) as exc:
        sys.stderr.write(f"adaptmw: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
