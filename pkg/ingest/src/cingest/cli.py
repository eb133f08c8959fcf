"""Command-line entry: convert a labeled C source tree into a dataset file.

Exit status: 0 success, 1 usage error, 2 ingestion/data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from cingest.convert import IngestError
from cingest.pipeline import IngestManifest, ingest_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def parse_label_table(entries) -> dict[str, int] | None:
    if not entries:
        return None
    table = {}
    for entry in entries:
        name, _, value = entry.partition("=")
        if not name or not value or not value.isdigit():
            raise IngestError(f"bad --label entry {entry!r}; expected name=integer")
        table[name] = int(value)
    return table


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cingest",
                     description="C sources -> AST dataset (one labeled tree per line)")
    parser.add_argument("root", help="directory whose subdirectories are the labels")
    parser.add_argument("--out", required=True, help="dataset file to write")
    parser.add_argument("--label", action="append", default=[], metavar="NAME=INT",
                        help="explicit subdirectory-to-label mapping (repeatable); "
                             "default numbers sorted subdirectories from 0")
    parser.add_argument("--pattern", default="*.c", help="source glob (default *.c)")
    parser.add_argument("--keep-preprocessor", action="store_true",
                        help="do not strip #-directives before parsing")
    parser.add_argument("--report-out", help="machine-readable ingestion report (JSON)")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CINGEST_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        manifest = IngestManifest(
            root=Path(args.root),
            out_path=Path(args.out),
            labels=parse_label_table(args.label),
            strip_preprocessor=not args.keep_preprocessor,
            pattern=args.pattern,
        )
        report = ingest_corpus(manifest)
    except (IngestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for line in report.lines():
        print(line)
    print(f"wrote {args.out}")
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fh:
            json.dump(report.to_doc(), fh, separators=(",", ":"))
            fh.write("\n")
        print(f"wrote report to {args.report_out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
