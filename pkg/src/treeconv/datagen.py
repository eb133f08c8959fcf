"""Deterministic synthetic AST corpora for desk-scale classification.

Each class is a structural motif: a spine of nested control nodes descends
through its parent's child list at a class-specific position (leftmost,
rightmost, middle, or alternating sides). Filler subtrees (leaves and small
operator nodes) pad every level, so the class signal lives purely in child
ordering and horizontal balance.

In count-matched mode, samples are generated in cross-class groups that
share one symbol multiset: the per-class trees of a group differ only in
shape, so counting features carry no label information by construction. In
the default mode, each class additionally prefers one control symbol, so
counts and structure are both informative.
"""

from __future__ import annotations

from dataclasses import dataclass

from treeconv.errors import ValidationError
from treeconv.numerics import SeededRng
from treeconv.trees import AnnotatedAst, Ast, LabeledDataset, Vocab, annotate

DEFAULT_CONTROL = ("For", "While", "DoWhile", "If")
DEFAULT_DATA = ("ID", "Constant")
DEFAULT_OPERATORS = ("BinaryOp", "Assignment", "ArrayRef")

MOTIFS = ("left", "right", "middle", "zigzag", "zigzag_reverse")


@dataclass
class GenConfig:
    n_classes: int = 4
    per_class: int = 150
    count_matched: bool = False
    seed: int = 0
    min_nodes: int = 10
    max_nodes: int = 80
    spine_depth: tuple[int, int] = (3, 6)
    fillers_per_level: tuple[int, int] = (2, 3)
    control_symbols: tuple[str, ...] = DEFAULT_CONTROL
    data_symbols: tuple[str, ...] = DEFAULT_DATA
    operator_symbols: tuple[str, ...] = DEFAULT_OPERATORS
    motifs: tuple[str, ...] | None = None  # per class; defaults to cycling MOTIFS
    count_bias: float = 0.55  # class-preferred control-symbol probability

    def __post_init__(self):
        if self.n_classes < 2 or self.per_class < 1:
            raise ValidationError("need n_classes >= 2 and per_class >= 1")
        if self.min_nodes < 1 or self.max_nodes < self.min_nodes:
            raise ValidationError("bad node-count bounds")
        if self.motifs is not None and len(self.motifs) != self.n_classes:
            raise ValidationError("one motif per class required")
        for m in self.motifs or ():
            if m not in MOTIFS:
                raise ValidationError(f"unknown motif: {m!r}")

    def class_motifs(self) -> tuple[str, ...]:
        if self.motifs is not None:
            return self.motifs
        return tuple(MOTIFS[c % len(MOTIFS)] for c in range(self.n_classes))


def _spine_position(motif: str, level: int, n_children: int) -> int:
    last = n_children - 1
    if motif == "left":
        return 0
    if motif == "right":
        return last
    if motif == "middle":
        return last // 2
    if motif == "zigzag":
        return 0 if level % 2 == 0 else last
    return last if level % 2 == 0 else 0  # zigzag_reverse


@dataclass(frozen=True)
class _Plan:
    """Class-independent skeleton: spine symbols and per-level filler specs."""

    spine: tuple[str, ...]
    fillers: tuple[tuple[tuple[str, ...], ...], ...]  # per level, per slot

    def n_nodes(self) -> int:
        return len(self.spine) + sum(len(spec) for level in self.fillers for spec in level)


def _draw_plan(cfg: GenConfig, rng: SeededRng, bias_class: int | None) -> _Plan:
    depth = int(rng.integers(cfg.spine_depth[0], cfg.spine_depth[1] + 1))
    spine = []
    for _ in range(depth):
        if bias_class is not None and rng.uniform(0.0, 1.0) < cfg.count_bias:
            spine.append(cfg.control_symbols[bias_class % len(cfg.control_symbols)])
        else:
            spine.append(rng.choice(cfg.control_symbols))
    fillers = []
    for _ in range(depth):
        slots = []
        for _ in range(int(rng.integers(cfg.fillers_per_level[0], cfg.fillers_per_level[1] + 1))):
            if rng.uniform(0.0, 1.0) < 0.5:
                slots.append((rng.choice(cfg.data_symbols),))
            else:
                slots.append((rng.choice(cfg.operator_symbols),
                              rng.choice(cfg.data_symbols), rng.choice(cfg.data_symbols)))
        fillers.append(tuple(slots))
    return _Plan(tuple(spine), tuple(fillers))


class _Builder:
    def __init__(self, vocab: Vocab):
        self.vocab = vocab
        self.symbols: list[int] = []
        self.children: list[tuple[int, ...]] = []

    def add(self, symbol: str, kids: tuple[int, ...] = ()) -> int:
        self.symbols.append(self.vocab.id_of(symbol))
        self.children.append(kids)
        return len(self.symbols) - 1

    def ast(self, root: int) -> Ast:
        return Ast(tuple(self.symbols), tuple(self.children), root)


def _build_filler(b: _Builder, spec: tuple[str, ...]) -> int:
    if len(spec) == 1:
        return b.add(spec[0])
    op, left, right = spec
    return b.add(op, (b.add(left), b.add(right)))


def _build_tree(plan: _Plan, motif: str, vocab: Vocab) -> Ast:
    b = _Builder(vocab)
    spine_child = None
    for level in range(len(plan.spine) - 1, -1, -1):
        kids = [_build_filler(b, spec) for spec in plan.fillers[level]]
        if spine_child is not None:
            pos = _spine_position(motif, level, len(kids) + 1)
            kids.insert(pos, spine_child)
        spine_child = b.add(plan.spine[level], tuple(kids))
    return b.ast(spine_child)


def default_vocab(cfg: GenConfig) -> Vocab:
    """All alphabet symbols registered up front, in a fixed order."""
    return Vocab(cfg.control_symbols + cfg.data_symbols + cfg.operator_symbols)


def generate_corpus(cfg: GenConfig) -> tuple[Vocab, LabeledDataset]:
    """Deterministic corpus; exactly ``per_class`` samples per class.

    Count-matched mode emits per-class variants of one shared plan per
    group, so every sample has same-counts partners in every other class.
    """
    vocab = default_vocab(cfg)
    motifs = cfg.class_motifs()
    rng = SeededRng(cfg.seed)
    samples: list[tuple[AnnotatedAst, int]] = []
    for _ in range(cfg.per_class):
        if cfg.count_matched:
            plan = _draw_size_checked_plan(cfg, rng, None)
            for label, motif in enumerate(motifs):
                samples.append((annotate(_build_tree(plan, motif, vocab)), label))
        else:
            for label, motif in enumerate(motifs):
                plan = _draw_size_checked_plan(cfg, rng, label)
                samples.append((annotate(_build_tree(plan, motif, vocab)), label))
    mode = "count-matched" if cfg.count_matched else "counts-differ"
    provenance = f"synthetic({mode}, classes={cfg.n_classes}, seed={cfg.seed})"
    return vocab, LabeledDataset(samples, cfg.n_classes, provenance)


def _draw_size_checked_plan(cfg: GenConfig, rng: SeededRng, bias_class: int | None) -> _Plan:
    for _ in range(500):
        plan = _draw_plan(cfg, rng, bias_class)
        if cfg.min_nodes <= plan.n_nodes() <= cfg.max_nodes:
            return plan
    raise ValidationError("size bounds are infeasible for the configured motif shapes")


def random_tree(rng: SeededRng, n_nodes: int, n_symbols: int) -> Ast:
    """Uniform random attachment tree with random symbols (for oracles/tests)."""
    if n_nodes < 1 or n_symbols < 1:
        raise ValidationError("need at least one node and one symbol")
    symbols = tuple(int(rng.integers(0, n_symbols)) for _ in range(n_nodes))
    children: list[list[int]] = [[] for _ in range(n_nodes)]
    for node in range(1, n_nodes):
        children[int(rng.integers(0, node))].append(node)
    return Ast(symbols, tuple(tuple(c) for c in children), 0)
