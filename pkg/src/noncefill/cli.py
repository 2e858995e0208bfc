"""Run the nonce autofill simulations from the shell.

    noncefill security-eval [--designs 3,4,5]
    noncefill functional-eval (--corpus FILE | --generate N [--seed S]) [--design D]
    noncefill bench --runs N [--no-replacement] [--body-size BYTES]
    noncefill replay SCENARIO_FILE
    noncefill corpus --generate N [--seed S] [-o FILE]

Every command takes ``--format machine|table``. ``security-eval`` exits 0 only
when every simulated matrix cell matches its expected rating; the other
evaluations exit non-zero when their own checks fail.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .report import FORMATS, Report, emit_report

log = logging.getLogger("noncefill")


def _designs(text: str) -> list[int]:
    try:
        designs = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad design list {text!r}") from None
    for d in designs:
        if d not in (3, 4, 5):
            raise argparse.ArgumentTypeError(f"design {d} is not simulated (choose from 3, 4, 5)")
    return designs


def _write(data: bytes, out) -> None:
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out).write_bytes(data)


def cmd_security_eval(args) -> int:
    matrix = harness.run_security_eval(args.designs)
    _write(emit_report(Report(matrix=matrix), args.format), args.output)
    for d, a, got, want in matrix.mismatches():
        log.error("design %d / %s: got %s, expected %s", d, a, got, want)
    return 0 if matrix.matches_expected() else 1


def _corpus(args) -> list[harness.SiteDescriptor]:
    if args.corpus is not None:
        return harness.load_corpus(Path(args.corpus).read_text())
    return harness.build_corpus(harness.CorpusSpec.scaled(args.generate), args.seed)


def cmd_functional_eval(args) -> int:
    result = harness.run_functional_eval(_corpus(args), args.design)
    report = Report()
    report.add_functional(result)
    _write(emit_report(report, args.format), args.output)
    unsound = [r for r in result.results if not harness.classification_sound(r)]
    for r in unsound:
        log.error("unsound classification for %s: %s", r.site, r)
    return 1 if unsound else 0


def cmd_bench(args) -> int:
    stats = harness.benchmark_overhead(args.runs, not args.no_replacement, args.body_size)
    _write(emit_report(Report(overhead=[stats.to_record()]), args.format), args.output)
    if args.no_replacement:
        ok = stats.replacement.median <= stats.timer_resolution_ns
    else:
        ok = stats.replacement_fraction < 0.5
    if not ok:
        log.error("overhead outside bounds: %s", stats.to_record())
    return 0 if ok else 1


def _trace_record(rec) -> dict:
    snap = None if rec.snapshot is None else rec.snapshot.decode("utf-8", "backslashreplace")
    view = None
    if rec.view is not None:
        view = {"url": rec.view.url, "method": rec.view.method, "request_id": rec.view.request_id,
                "body_visible": hasattr(rec.view, "body")}
    return {"stage": rec.stage.value, "observer": rec.observer, "kind": rec.kind,
            "snapshot": snap, "view": view, "note": rec.note}


def cmd_replay(args) -> int:
    scenario = harness.Scenario.from_json(Path(args.scenario).read_text())
    rep = harness.replay(scenario)
    trace = [_trace_record(r) for r in rep.run.result.trace]
    outcomes = [{"attacker": o.attacker, "verdict": o.verdict.value} for o in rep.outcomes]
    if args.format == "machine":
        doc = {"scenario": rep.result.to_record(), "trace": trace, "attacks": outcomes,
               "cancelled": rep.run.result.cancelled}
        data = (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    else:
        lines = [f"site {rep.result.site}, design {rep.result.design}: {rep.result.category}"]
        for t in trace:
            shown = t["snapshot"] if t["snapshot"] is not None else ("(no body)" if t["view"] else "")
            lines.append(f"  {t['stage']:22} {t['kind']:9} {t['observer']:22} {shown} {t['note']}".rstrip())
        lines += [f"  attack {o['attacker']}: {o['verdict']}" for o in outcomes]
        data = ("\n".join(lines) + "\n").encode()
    _write(data, args.output)
    return 0


def cmd_corpus(args) -> int:
    sites = harness.build_corpus(harness.CorpusSpec.scaled(args.generate), args.seed)
    _write(harness.dump_corpus(sites).encode(), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default="table")
    common.add_argument("-o", "--output", help="write to a file instead of stdout")

    parser = argparse.ArgumentParser(prog="noncefill", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("security-eval", parents=[common], help="attack every design and rebuild the matrix")
    p.add_argument("--designs", type=_designs, default=[3, 4, 5])
    p.set_defaults(func=cmd_security_eval)

    p = sub.add_parser("functional-eval", parents=[common], help="classify a site corpus")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="corpus file, one JSON site per line")
    src.add_argument("--generate", type=int, metavar="N", help="generate an N-site corpus")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--design", type=int, choices=(3, 4, 5), default=5)
    p.set_defaults(func=cmd_functional_eval)

    p = sub.add_parser("bench", parents=[common], help="time the replacement stage")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--no-replacement", action="store_true")
    p.add_argument("--body-size", type=int, default=4096)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", parents=[common], help="run one scenario file and dump its trace")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("corpus", parents=[common], help="write a generated corpus file")
    p.add_argument("--generate", type=int, metavar="N", default=100)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_corpus)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "runs", 1) < 1:
        log.error("--runs must be >= 1")
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
