"""One C translation unit -> one AST interchange record.

Symbols are the parser's node kind names (Decl, TypeDecl, BinaryOp, ID,
Constant, For, While, ...); identifier names and literal values are dropped
so the vocabulary stays at the node-kind granularity. The emitted record is
the recursive ``{"symbol": ..., "children": [...]}`` shape the downstream
toolkit pins as its interchange contract.

pycparser is a plain syntax parser with no preprocessor, so by default
preprocessor lines are stripped before parsing; judge-style single-file
programs survive this, while code depending on macro expansion or library
typedefs simply fails to parse and is skipped upstream.
"""

from __future__ import annotations

import json

from pycparser import c_parser
from pycparser.c_parser import ParseError


class IngestError(Exception):
    """Source cannot be converted (parse failure, empty unit)."""


def strip_preprocessor(source: str) -> str:
    """Drop preprocessor directives, including backslash-continued ones."""
    out = []
    in_directive = False
    for line in source.splitlines():
        stripped = line.lstrip()
        if in_directive:
            in_directive = stripped.endswith("\\")
            continue
        if stripped.startswith("#"):
            in_directive = stripped.endswith("\\")
            continue
        out.append(line)
    return "\n".join(out)


def _node_record(node) -> dict:
    return {
        "symbol": type(node).__name__,
        "children": [_node_record(child) for _, child in node.children()],
    }


def ingest_source(source: str, strip: bool = True) -> dict:
    """Parse C text and return the interchange record of its AST.

    A translation unit with exactly one top-level declaration is unwrapped
    (the record's root is that declaration); files with several top-level
    items keep the FileAST root so the tree stays single-rooted.
    """
    if strip:
        source = strip_preprocessor(source)
    parser = c_parser.CParser()
    try:
        unit = parser.parse(source)
    except ParseError as exc:
        raise IngestError(f"parse failure: {exc}") from None
    top = [child for _, child in unit.children()]
    if not top:
        raise IngestError("empty translation unit")
    root = top[0] if len(top) == 1 else unit
    return _node_record(root)


def record_to_line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False)
