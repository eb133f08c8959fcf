"""Per-symbol embedding learning from (parent, children) windows.

Each non-leaf node of a corpus yields one training sample: the children's
vectors, weighted by leaf fractions and passed through one tanh layer, should
land close to the parent's vector. A margin hinge against a corrupted copy of
the sample (one symbol swapped at random) keeps the solution away from the
trivial all-zeros embedding.

Variable child counts are handled by interpolating between just two weight
matrices: child i of n uses ``c_r = (i-1)/(n-1)`` of the right matrix and
``c_l = 1 - c_r`` of the left one (0.5/0.5 for an only child).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from treeconv.errors import ValidationError
from treeconv.numerics import MomentumState, SeededRng, sgd_momentum_step, tanh_prime
from treeconv.trees import AnnotatedAst, Vocab, child_coefficients

log = logging.getLogger(__name__)

EMBEDDINGS_FORMAT = "treeconv-embeddings"
EMBEDDINGS_VERSION = 1


@dataclass
class EmbeddingTable:
    """One float64 row per vocabulary symbol, plus a trailing unknown row."""

    vectors: np.ndarray  # (n_symbols + 1, n_features)

    @property
    def n_symbols(self) -> int:
        return self.vectors.shape[0] - 1

    @property
    def n_features(self) -> int:
        return self.vectors.shape[1]

    def vec(self, symbol_id: int) -> np.ndarray:
        return self.vectors[symbol_id]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.vectors.copy())


@dataclass
class CodingParams:
    """The two interpolated child-encoding matrices and their bias."""

    w_left: np.ndarray  # (n_features, n_features)
    w_right: np.ndarray  # (n_features, n_features)
    bias: np.ndarray  # (n_features,)

    def copy(self) -> "CodingParams":
        return CodingParams(self.w_left.copy(), self.w_right.copy(), self.bias.copy())


@dataclass(frozen=True)
class PretrainSample:
    """Parent symbol with its ordered child symbols and leaf-fraction weights."""

    parent: int
    children: tuple[int, ...]
    weights: tuple[float, ...]  # leaf fractions, sum to 1

    def __post_init__(self):
        if not self.children:
            raise ValidationError("pretraining sample needs at least one child")


@dataclass
class PretrainConfig:
    n_features: int = 30
    margin: float = 1.0
    learning_rate: float = 0.03
    epochs: int = 20
    seed: int = 0
    init_scale: float = 0.1
    momentum: float = 0.0
    l2: float = 0.0

    def __post_init__(self):
        if self.margin <= 0 or self.n_features < 1:
            raise ValidationError("margin must be positive and n_features >= 1")


def coding_coefficients(i: int, n: int) -> tuple[float, float]:
    """(left, right) interpolation weights for child ``i`` of ``n`` (1-based)."""
    if not 1 <= i <= n:
        raise ValidationError(f"child ordinal {i} outside 1..{n}")
    c_r = 0.5 if n == 1 else (i - 1) / (n - 1)
    return 1.0 - c_r, c_r


def samples_from_tree(annotated: AnnotatedAst) -> list[PretrainSample]:
    """One sample per non-leaf node, in node-index order."""
    ast = annotated.ast
    out = []
    for node in range(len(ast)):
        kids = ast.children[node]
        if kids:
            weights = child_coefficients(annotated, node)
            out.append(PretrainSample(
                parent=ast.symbols[node],
                children=tuple(ast.symbols[c] for c in kids),
                weights=tuple(float(w) for w in weights),
            ))
    return out


def _interp_sums(sample: PretrainSample, emb: EmbeddingTable) -> tuple[np.ndarray, np.ndarray]:
    """Left/right weighted child-vector sums; the matrix interpolation
    distributes, so the coded vector is W_l @ u_l + W_r @ u_r + b."""
    n_f = emb.n_features
    u_l = np.zeros(n_f)
    u_r = np.zeros(n_f)
    n = len(sample.children)
    for i, (sym, w) in enumerate(zip(sample.children, sample.weights), start=1):
        c_l, c_r = coding_coefficients(i, n)
        x = emb.vec(sym)
        u_l += (w * c_l) * x
        u_r += (w * c_r) * x
    return u_l, u_r


def code_children(sample: PretrainSample, emb: EmbeddingTable, cp: CodingParams) -> np.ndarray:
    """tanh of the weighted, interpolated combination of the child vectors."""
    u_l, u_r = _interp_sums(sample, emb)
    return np.tanh(cp.w_left @ u_l + cp.w_right @ u_r + cp.bias)


def coding_distance(sample: PretrainSample, emb: EmbeddingTable, cp: CodingParams) -> float:
    """Squared Euclidean distance between the parent vector and the coded one."""
    r = emb.vec(sample.parent) - code_children(sample, emb, cp)
    return float(r @ r)


def negative_sample(sample: PretrainSample, n_symbols: int, rng: SeededRng) -> PretrainSample:
    """Corrupt one position (parent or a child, uniformly) to a different symbol."""
    if n_symbols < 2:
        raise ValidationError("need at least 2 symbols to draw a corruption")
    n = len(sample.children)
    pos = int(rng.integers(0, n + 1))
    original = sample.parent if pos == 0 else sample.children[pos - 1]
    repl = int(rng.integers(0, n_symbols - 1))
    if repl >= original:
        repl += 1
    if pos == 0:
        return PretrainSample(repl, sample.children, sample.weights)
    kids = list(sample.children)
    kids[pos - 1] = repl
    return PretrainSample(sample.parent, tuple(kids), sample.weights)


def _accumulate_distance_grads(sample: PretrainSample, emb: EmbeddingTable,
                               cp: CodingParams, sign: float,
                               grads: dict[str, np.ndarray]) -> float:
    """Add sign * d(distance)/d(theta) into ``grads``; return the distance."""
    u_l, u_r = _interp_sums(sample, emb)
    code = np.tanh(cp.w_left @ u_l + cp.w_right @ u_r + cp.bias)
    r = emb.vec(sample.parent) - code
    d = float(r @ r)

    grads["embeddings"][sample.parent] += sign * 2.0 * r
    delta = sign * (-2.0 * r) * tanh_prime(code)
    grads["b_code"] += delta
    grads["w_code_left"] += np.outer(delta, u_l)
    grads["w_code_right"] += np.outer(delta, u_r)
    back_l = cp.w_left.T @ delta
    back_r = cp.w_right.T @ delta
    n = len(sample.children)
    for i, (sym, w) in enumerate(zip(sample.children, sample.weights), start=1):
        c_l, c_r = coding_coefficients(i, n)
        grads["embeddings"][sym] += w * (c_l * back_l + c_r * back_r)
    return d


def hinge_loss_and_grads(positive: PretrainSample, negative: PretrainSample,
                         emb: EmbeddingTable, cp: CodingParams,
                         margin: float) -> tuple[float, dict[str, np.ndarray] | None]:
    """Hinge max(0, margin + d - d_c) for a fixed corruption, with exact grads.

    Returns (loss, grads); grads is None when the hinge is inactive (the
    subgradient at the kink is taken as zero).
    """
    grads = {
        "embeddings": np.zeros_like(emb.vectors),
        "w_code_left": np.zeros_like(cp.w_left),
        "w_code_right": np.zeros_like(cp.w_right),
        "b_code": np.zeros_like(cp.bias),
    }
    d = _accumulate_distance_grads(positive, emb, cp, +1.0, grads)
    d_c = _accumulate_distance_grads(negative, emb, cp, -1.0, grads)
    loss = margin + d - d_c
    if loss <= 0.0:
        return 0.0, None
    return loss, grads


def pretrain_step(sample: PretrainSample, emb: EmbeddingTable, cp: CodingParams,
                  config: PretrainConfig, rng: SeededRng,
                  state: MomentumState) -> float:
    """Draw one corruption, take one hinge step if it is active; return the loss."""
    negative = negative_sample(sample, emb.n_symbols, rng)
    loss, grads = hinge_loss_and_grads(sample, negative, emb, cp, config.margin)
    if grads is None:
        return loss
    if not np.isfinite(loss):
        log.warning("non-finite pretraining loss; step skipped")
        return loss
    params = {
        "embeddings": emb.vectors,
        "w_code_left": cp.w_left,
        "w_code_right": cp.w_right,
        "b_code": cp.bias,
    }
    sgd_momentum_step(params, grads, state, config.learning_rate, config.momentum,
                      config.l2, decayed=frozenset({"w_code_left", "w_code_right"}))
    return loss


def init_pretrain_params(n_symbols: int, config: PretrainConfig,
                         rng: SeededRng) -> tuple[EmbeddingTable, CodingParams]:
    """Uniform [-init_scale, init_scale] embeddings and coding weights, zero bias.

    The trailing unknown-symbol row starts at the mean of the real rows.
    """
    s = config.init_scale
    f = config.n_features
    vectors = np.zeros((n_symbols + 1, f))
    vectors[:n_symbols] = rng.uniform(-s, s, (n_symbols, f))
    vectors[n_symbols] = vectors[:n_symbols].mean(axis=0)
    cp = CodingParams(
        w_left=rng.uniform(-s, s, (f, f)),
        w_right=rng.uniform(-s, s, (f, f)),
        bias=np.zeros(f),
    )
    return EmbeddingTable(vectors), cp


def run_pretrain(corpus: list[AnnotatedAst], vocab: Vocab,
                 config: PretrainConfig) -> tuple[EmbeddingTable, CodingParams, list[float]]:
    """Train embeddings over every non-leaf window of the corpus.

    Returns the table, the coding parameters, and the per-epoch mean loss.
    Fully deterministic: the sample order is the corpus order, reshuffled
    per epoch from the configured seed.
    """
    if not corpus:
        raise ValidationError("empty corpus")
    samples: list[PretrainSample] = []
    for annotated in corpus:
        samples.extend(samples_from_tree(annotated))
    if not samples:
        raise ValidationError("corpus has no non-leaf nodes to learn from")

    rng = SeededRng(config.seed)
    emb, cp = init_pretrain_params(len(vocab), config, rng)
    state = MomentumState()
    curve: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for idx in order:
            total += pretrain_step(samples[idx], emb, cp, config, rng, state)
        curve.append(total / len(samples))
    emb.vectors[emb.n_symbols] = emb.vectors[:emb.n_symbols].mean(axis=0)
    return emb, cp, curve


# ---------------------------------------------------------------------------
# Embedding checkpoint
# ---------------------------------------------------------------------------


def save_embeddings(path, vocab: Vocab, emb: EmbeddingTable, cp: CodingParams) -> None:
    """Versioned JSON checkpoint; the last vector row is the unknown-symbol row."""
    doc = {
        "format": EMBEDDINGS_FORMAT,
        "version": EMBEDDINGS_VERSION,
        "n_features": emb.n_features,
        "symbols": list(vocab.symbols),
        "vectors": emb.vectors.tolist(),
        "coding": {
            "w_left": cp.w_left.tolist(),
            "w_right": cp.w_right.tolist(),
            "bias": cp.bias.tolist(),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_embeddings(path) -> tuple[Vocab, EmbeddingTable, CodingParams]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"corrupt embedding checkpoint: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != EMBEDDINGS_FORMAT:
        raise ValidationError("not an embedding checkpoint")
    if doc.get("version") != EMBEDDINGS_VERSION:
        raise ValidationError(f"unsupported embedding checkpoint version: {doc.get('version')!r}")
    vocab = Vocab(doc["symbols"])
    vectors = np.array(doc["vectors"], dtype=np.float64)
    if vectors.shape != (len(vocab) + 1, doc["n_features"]):
        raise ValidationError("embedding table shape disagrees with header")
    coding = doc["coding"]
    cp = CodingParams(
        w_left=np.array(coding["w_left"], dtype=np.float64),
        w_right=np.array(coding["w_right"], dtype=np.float64),
        bias=np.array(coding["bias"], dtype=np.float64),
    )
    f = doc["n_features"]
    if cp.w_left.shape != (f, f) or cp.w_right.shape != (f, f) or cp.bias.shape != (f,):
        raise ValidationError("coding parameter shapes disagree with header")
    for t in (vectors, cp.w_left, cp.w_right, cp.bias):
        if not np.all(np.isfinite(t)):
            raise ValidationError("embedding checkpoint contains non-finite values")
    return vocab, EmbeddingTable(vectors), cp
