"""AST data model, per-node annotations, and the interchange file formats.

Trees are stored flat: node ``i`` has a symbol id and an ordered tuple of
child indices. Child order is taken exactly as produced by the writer of the
document; it is semantically meaningful and never canonicalized.

On-disk formats (UTF-8 text):

- AST interchange: one recursive JSON record per tree,
  ``{"symbol": <string>, "children": [<record>, ...]}``.
- Dataset file: one sample per line, each line
  ``{"label": <non-negative integer>, "ast": <record>}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

import numpy as np

from treeconv.errors import ValidationError

UNKNOWN_SYMBOL = "<UNK>"


class Vocab:
    """Dense bijection between symbol strings and integer ids.

    Ids are assigned in first-registration order. The reserved id
    ``len(vocab)`` (one past the last real symbol) denotes an unknown symbol
    seen only at inference time; it has no string entry.
    """

    def __init__(self, symbols: Iterable[str] = ()):
        self._symbols: list[str] = []
        self._index: dict[str, int] = {}
        for s in symbols:
            self.add(s)

    def add(self, symbol: str) -> int:
        """Register ``symbol`` if new; return its id either way."""
        sid = self._index.get(symbol)
        if sid is None:
            sid = len(self._symbols)
            self._index[symbol] = sid
            self._symbols.append(symbol)
        return sid

    def id_of(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise ValidationError(f"unknown symbol: {symbol!r}") from None

    def id_or_unk(self, symbol: str) -> int:
        return self._index.get(symbol, self.unk_id)

    def symbol_of(self, sid: int) -> str:
        if sid == self.unk_id:
            return UNKNOWN_SYMBOL
        return self._symbols[sid]

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(self._symbols)

    @property
    def unk_id(self) -> int:
        return len(self._symbols)

    def __len__(self) -> int:
        return len(self._symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and other._symbols == self._symbols

    def __repr__(self) -> str:
        return f"Vocab({len(self)} symbols)"


@dataclass(frozen=True)
class Ast:
    """Rooted ordered tree of symbol ids, stored as flat parallel tuples."""

    symbols: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]
    root: int = 0

    def __post_init__(self):
        n = len(self.symbols)
        if n == 0:
            raise ValidationError("empty tree")
        if len(self.children) != n:
            raise ValidationError("children list length differs from node count")
        if not 0 <= self.root < n:
            raise ValidationError("root index out of range")
        parent_seen = [False] * n
        for node, kids in enumerate(self.children):
            for c in kids:
                if not 0 <= c < n:
                    raise ValidationError(f"child index {c} out of range at node {node}")
                if c == self.root:
                    raise ValidationError("root appears as a child")
                if parent_seen[c]:
                    raise ValidationError(f"node {c} has multiple parents")
                parent_seen[c] = True
        # n-1 single-parent edges plus full reachability from the root rules
        # out cycles and disconnected nodes.
        reached = 0
        stack = [self.root]
        visited = [False] * n
        visited[self.root] = True
        while stack:
            node = stack.pop()
            reached += 1
            for c in self.children[node]:
                if not visited[c]:
                    visited[c] = True
                    stack.append(c)
        if reached != n:
            raise ValidationError("tree is not connected (cycle or orphan nodes)")

    def __len__(self) -> int:
        return len(self.symbols)

    def is_leaf(self, node: int) -> bool:
        return not self.children[node]

    def post_order(self) -> Iterator[int]:
        """Yield node indices children-before-parent, iteratively."""
        stack: list[tuple[int, bool]] = [(self.root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                yield node
            else:
                stack.append((node, True))
                for c in reversed(self.children[node]):
                    stack.append((c, False))


@dataclass(frozen=True)
class AnnotatedAst:
    """An `Ast` plus the per-node quantities the model formulas consume.

    ``leaf_lo``/``leaf_hi`` give the half-open interval of leaf ordinals
    (left-to-right) spanned by each node's subtree; ``h_pos`` is the interval
    midpoint normalized by the total leaf count, i.e. a horizontal position
    in [0, 1].
    """

    ast: Ast
    leaf_count: np.ndarray  # int64, per node
    depth: np.ndarray  # int64, root depth = 1
    leaf_lo: np.ndarray  # int64
    leaf_hi: np.ndarray  # int64
    h_pos: np.ndarray  # float64 in [0, 1]
    total_leaves: int

    @property
    def mean_leaf_depth(self) -> float:
        leaves = [i for i in range(len(self.ast)) if self.ast.is_leaf(i)]
        return float(np.mean(self.depth[leaves]))

    def __len__(self) -> int:
        return len(self.ast)


def annotate(ast: Ast) -> AnnotatedAst:
    """Compute leaf counts, depths, and leaf-interval positions for every node."""
    n = len(ast)
    leaf_count = np.zeros(n, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    leaf_lo = np.zeros(n, dtype=np.int64)
    leaf_hi = np.zeros(n, dtype=np.int64)

    depth[ast.root] = 1
    order = list(ast.post_order())
    for node in reversed(order):  # parents before children
        for c in ast.children[node]:
            depth[c] = depth[node] + 1

    next_leaf = 0
    for node in order:  # children before parents; leaves appear left-to-right
        kids = ast.children[node]
        if not kids:
            leaf_count[node] = 1
            leaf_lo[node] = next_leaf
            next_leaf += 1
            leaf_hi[node] = next_leaf
        else:
            leaf_count[node] = sum(leaf_count[c] for c in kids)
            leaf_lo[node] = leaf_lo[kids[0]]
            leaf_hi[node] = leaf_hi[kids[-1]]

    total = int(leaf_count[ast.root])
    h_pos = ((leaf_lo + leaf_hi) / 2.0) / total
    for arr in (leaf_count, depth, leaf_lo, leaf_hi, h_pos):
        arr.setflags(write=False)
    return AnnotatedAst(ast, leaf_count, depth, leaf_lo, leaf_hi, h_pos, total)


def child_coefficients(annotated: AnnotatedAst, node: int) -> np.ndarray:
    """Per-child leaf-count fractions; they sum to 1 for any non-leaf node."""
    kids = annotated.ast.children[node]
    if not kids:
        raise ValidationError(f"node {node} is a leaf")
    counts = annotated.leaf_count[list(kids)].astype(np.float64)
    return counts / float(annotated.leaf_count[node])


# ---------------------------------------------------------------------------
# Interchange format
# ---------------------------------------------------------------------------


def _record_to_nodes(record, vocab: Vocab, unknown: str) -> tuple[list[int], list[tuple[int, ...]]]:
    symbols: list[int] = []
    children: list[tuple[int, ...]] = []
    # (record, parent_index) work list; children are appended in document order.
    stack: list[tuple[dict, int]] = [(record, -1)]
    pending: list[list[int]] = []
    while stack:
        rec, parent = stack.pop()
        if not isinstance(rec, dict):
            raise ValidationError(f"expected an object node, got {type(rec).__name__}")
        extra = set(rec) - {"symbol", "children"}
        if "symbol" not in rec or "children" not in rec or extra:
            raise ValidationError("node must have exactly the fields 'symbol' and 'children'")
        sym = rec["symbol"]
        kids = rec["children"]
        if not isinstance(sym, str) or not isinstance(kids, list):
            raise ValidationError("'symbol' must be a string and 'children' a list")
        if unknown == "error" and sym not in vocab:
            raise ValidationError(f"unknown symbol: {sym!r}")
        sid = vocab.add(sym) if unknown == "add" else vocab.id_or_unk(sym)
        idx = len(symbols)
        symbols.append(sid)
        pending.append([])
        if parent >= 0:
            pending[parent].append(idx)
        # Reversed push: the LIFO pop then visits siblings in document order.
        for kid in reversed(kids):
            stack.append((kid, idx))
    children = [tuple(p) for p in pending]
    return symbols, children


def load_ast(text: str, vocab: Vocab, unknown: str = "add") -> Ast:
    """Parse one interchange document into an `Ast` against ``vocab``.

    ``unknown`` controls symbols missing from ``vocab``: ``"add"`` registers
    them, ``"unk"`` maps them to the reserved unknown id, ``"error"`` rejects
    the document.
    """
    if unknown not in ("add", "unk", "error"):
        raise ValidationError(f"bad unknown-symbol mode: {unknown!r}")
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed document: {exc}") from None
    symbols, children = _record_to_nodes(record, vocab, unknown)
    return Ast(tuple(symbols), tuple(children), root=0)


def dump_ast(ast: Ast, vocab: Vocab) -> str:
    """Serialize to the interchange format (single line, compact)."""
    records: dict[int, dict] = {}
    for node in ast.post_order():
        records[node] = {
            "symbol": vocab.symbol_of(ast.symbols[node]),
            "children": [records[c] for c in ast.children[node]],
        }
    return json.dumps(records[ast.root], separators=(",", ":"), ensure_ascii=False)


def build_vocab(documents: Iterable[str]) -> Vocab:
    """Vocabulary over interchange documents, ids in first-occurrence order."""
    vocab = Vocab()
    count = 0
    for text in documents:
        load_ast(text, vocab, unknown="add")
        count += 1
    if count == 0:
        raise ValidationError("empty corpus")
    return vocab


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------


@dataclass
class LabeledDataset:
    """Annotated trees with class labels; labels are dense in [0, n_classes)."""

    samples: list[tuple[AnnotatedAst, int]]
    n_classes: int
    provenance: str = ""

    def __post_init__(self):
        if not self.samples:
            raise ValidationError("dataset has no samples")
        present = sorted({label for _, label in self.samples})
        if present[0] < 0 or present[-1] >= self.n_classes:
            raise ValidationError("label outside [0, n_classes)")
        if len(present) != self.n_classes:
            missing = sorted(set(range(self.n_classes)) - set(present))
            raise ValidationError(f"labels not dense; missing classes {missing}")

    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.samples], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.samples)


def _iter_dataset_lines(fh: TextIO) -> Iterator[tuple[int, str]]:
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if line:
            yield lineno, line


def load_dataset(path_or_fh, vocab: Vocab, unknown: str = "add",
                 provenance: str = "") -> LabeledDataset:
    """Read a dataset file (JSON lines of ``{"label": ..., "ast": ...}``)."""
    if isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__"):
        with open(path_or_fh, "r", encoding="utf-8") as fh:
            return load_dataset(fh, vocab, unknown, provenance or str(path_or_fh))
    samples: list[tuple[AnnotatedAst, int]] = []
    for lineno, line in _iter_dataset_lines(path_or_fh):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"line {lineno}: malformed JSON: {exc}") from None
        if not isinstance(record, dict) or set(record) != {"label", "ast"}:
            raise ValidationError(f"line {lineno}: expected fields 'label' and 'ast'")
        label = record["label"]
        if not isinstance(label, int) or isinstance(label, bool) or label < 0:
            raise ValidationError(f"line {lineno}: label must be a non-negative integer")
        symbols, children = _record_to_nodes(record["ast"], vocab, unknown)
        ast = Ast(tuple(symbols), tuple(children), root=0)
        samples.append((annotate(ast), label))
    if not samples:
        raise ValidationError("dataset file has no samples")
    n_classes = max(label for _, label in samples) + 1
    return LabeledDataset(samples, n_classes, provenance)


def save_dataset(path_or_fh, samples: Iterable[tuple[Ast, int]], vocab: Vocab) -> None:
    """Write ``(ast, label)`` pairs as a dataset file, one JSON line each."""
    if isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__"):
        with open(path_or_fh, "w", encoding="utf-8") as fh:
            save_dataset(fh, samples, vocab)
            return
    fh = path_or_fh
    for ast, label in samples:
        record = json.loads(dump_ast(ast, vocab))
        fh.write(json.dumps({"label": int(label), "ast": record},
                            separators=(",", ":"), ensure_ascii=False))
        fh.write("\n")
