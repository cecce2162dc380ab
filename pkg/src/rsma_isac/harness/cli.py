"""Command line: ``python -m rsma_isac.harness run|emit``."""

from __future__ import annotations

import argparse
import logging
import sys

from .figures import FIGURES, emit_figure_data
from .records import read_records
from .runner import run
from .spec import SpecError, load_spec


def _seeds(text: str) -> list[int]:
    """'5' -> 0..4, '3,7,9' -> that list."""
    try:
        if "," in text:
            return [int(s) for s in text.split(",") if s.strip()]
        return list(range(int(text)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a count or a comma list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="python -m rsma_isac.harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run every task of a spec file")
    r.add_argument("spec")
    r.add_argument("--seeds", type=_seeds, help="count or comma-separated list; overrides the spec")
    r.add_argument("--trace-dir", help="per-task iteration traces (JSON lines)")
    r.add_argument("--out", help="output directory; overrides the spec")
    e = sub.add_parser("emit", help="write figure data from a records file")
    e.add_argument("figure", choices=FIGURES)
    e.add_argument("records")
    e.add_argument("--out", default=".", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.cmd == "run":
        try:
            spec = load_spec(args.spec)
        except SpecError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        path = run(spec, seeds=args.seeds, trace_dir=args.trace_dir, out=args.out)
        print(path)
        return 0
    try:
        recs = read_records(args.records)
        path = emit_figure_data(recs, args.figure, args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0
