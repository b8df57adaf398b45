"""Command-line front end: run scenarios, check convergence, print metrics, pin vectors.

Exit codes: 0 when everything requested passed, 1 when a check failed,
2 for usage and I/O errors.  ``EDP_LOG`` sets the log level (e.g. ``debug``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from . import vectors
from .errors import ScenarioInvalid
from .sim import load_scenario, measure, metrics_csv, run

DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit(2) itself; keep control here
        raise UsageError(message)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="edp", description="Simulate and check replicated extend-only posets.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--seed", type=_u64, default=None,
                        help="override the scenario seed (default: the scenario's own)")
        sp.add_argument("--out", type=Path, default=None, help="directory for output files")
        sp.add_argument("--format", choices=("json", "csv"), default="json")

    r = sub.add_parser("run", help="run one scenario, write transcript and metrics")
    r.add_argument("scenario", type=Path)
    common(r)
    c = sub.add_parser("check", help="run scenarios and print a verdict for each")
    c.add_argument("paths", type=Path, nargs="+", help="scenario files or directories")
    common(c)
    m = sub.add_parser("metrics", help="run one scenario and print its metrics")
    m.add_argument("scenario", type=Path)
    common(m)
    v = sub.add_parser("vectors", help="regenerate pinned test vectors and compare")
    v.add_argument("--write", type=Path, default=None, metavar="FILE",
                   help="write the regenerated vectors to FILE instead of comparing")
    v.add_argument("--pinned", type=Path, default=None, metavar="FILE",
                   help="compare against FILE instead of the bundled copy")
    return p


def _scenario_files(paths: list) -> list:
    files = []
    for path in paths:
        if path.is_dir():
            files.extend(sorted(path.glob("*.json")))
        elif path.is_file():
            files.append(path)
        else:
            raise FileNotFoundError(f"no such scenario file or directory: {path}")
    return files


def _load(path: Path, seed: Optional[int]):
    s = load_scenario(path)
    return s if seed is None else s.with_seed(seed)


def _metrics_text(result, fmt: str) -> str:
    if fmt == "csv":
        return metrics_csv(result.transcript)
    return json.dumps(measure(result.transcript), sort_keys=True, indent=2) + "\n"


def _verdict_line(name: str, verdict) -> str:
    flags = " ".join(f"{k}={str(getattr(verdict, k)).lower()}"
                     for k in ("self_update", "eventual_update", "strong_convergence"))
    line = f"{'PASS' if verdict.ok else 'FAIL'} {name} {flags}"
    if verdict.evidence:
        line += " evidence=" + json.dumps(verdict.evidence, sort_keys=True)
    return line


def cmd_run(args, out) -> int:
    result = run(_load(args.scenario, args.seed))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        stem = result.scenario.name
        (args.out / f"{stem}.transcript.jsonl").write_text(result.transcript_jsonl())
        (args.out / f"{stem}.metrics.{args.format}").write_text(_metrics_text(result, args.format))
    else:
        out.write(result.transcript_jsonl())
    print(_verdict_line(result.scenario.name, result.verdict), file=sys.stderr)
    return 0 if result.verdict.ok else 1


def cmd_check(args, out) -> int:
    failed = 0
    for path in _scenario_files(args.paths):
        result = run(_load(path, args.seed))
        failed += not result.verdict.ok
        out.write(_verdict_line(result.scenario.name, result.verdict) + "\n")
    return 1 if failed else 0


def cmd_metrics(args, out) -> int:
    result = run(_load(args.scenario, args.seed))
    text = _metrics_text(result, args.format)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{result.scenario.name}.metrics.{args.format}").write_text(text)
    else:
        out.write(text)
    return 0


def cmd_vectors(args, out) -> int:
    if args.write is not None:
        args.write.write_text(vectors.dumps(vectors.generate()))
        out.write(f"wrote {args.write}\n")
        return 0
    pinned = args.pinned.read_text() if args.pinned is not None else None
    problems = vectors.verify(pinned)
    for p in problems:
        out.write(f"MISMATCH {p}\n")
    if not problems:
        out.write("vectors: bit-identical\n")
    return 1 if problems else 0


COMMANDS = {"run": cmd_run, "check": cmd_check, "metrics": cmd_metrics, "vectors": cmd_vectors}


def main(argv: Optional[list] = None, out=None) -> int:
    out = out or sys.stdout
    level = os.environ.get("EDP_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"edp: error: {exc}", file=sys.stderr)
    except ScenarioInvalid as exc:
        print(f"edp: invalid scenario: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"edp: {exc}", file=sys.stderr)
    return 2
