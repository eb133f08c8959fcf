"""Dataset splitting, the supervised training loop, metrics, checkpoints.

Training is per-sample SGD (with optional momentum and weight decay on the
weight matrices), single-threaded on purpose: sequential updates are part of
the reproducibility contract. Identical (data, config, seed) produce
byte-identical checkpoints.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, fields

import numpy as np

from treeconv.errors import NumericsError, ValidationError
from treeconv.network import (
    WEIGHT_MATRICES,
    CompiledTree,
    ModelParams,
    backward,
    compile_tree,
    cross_entropy,
    forward,
)
from treeconv.numerics import MomentumState, SeededRng, sgd_momentum_step
from treeconv.pretrain import CodingParams, EmbeddingTable
from treeconv.trees import LabeledDataset, Vocab

log = logging.getLogger(__name__)

MODEL_FORMAT = "treeconv-model"
MODEL_VERSION = 1

TRAIN_FRACTION, CV_FRACTION = 0.6, 0.2


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint, covering train/cv/test index lists (60/20/20)."""

    train: tuple[int, ...]
    cv: tuple[int, ...]
    test: tuple[int, ...]
    seed: int

    def part(self, name: str) -> tuple[int, ...]:
        if name not in ("train", "cv", "test"):
            raise ValidationError(f"unknown split part: {name!r}")
        return getattr(self, name)


def split_dataset(ds: LabeledDataset, seed: int) -> SplitSpec:
    """Deterministic shuffled 60/20/20 split, stratified by label.

    Falls back to a non-stratified split (with a warning) when some class
    has fewer than 3 samples.
    """
    if len(ds) < 5:
        raise ValidationError("need at least 5 samples to split")
    labels = ds.labels()
    pools = [np.nonzero(labels == c)[0] for c in range(ds.n_classes)]
    if min(len(p) for p in pools) < 3:
        log.warning("a class has fewer than 3 samples; splitting without stratification")
        pools = [np.arange(len(ds))]
    rng = SeededRng(seed)
    train: list[int] = []
    cv: list[int] = []
    test: list[int] = []
    for pool in pools:
        idx = pool[rng.permutation(len(pool))]
        n = len(idx)
        n_train = int(round(TRAIN_FRACTION * n))
        n_cv = int(round(CV_FRACTION * n))
        train.extend(int(i) for i in idx[:n_train])
        cv.extend(int(i) for i in idx[n_train:n_train + n_cv])
        test.extend(int(i) for i in idx[n_train + n_cv:])
    return SplitSpec(tuple(sorted(train)), tuple(sorted(cv)), tuple(sorted(test)), seed)


@dataclass
class TrainConfig:
    n_features: int = 30
    n_conv: int = 30
    n_hidden: int = 30
    learning_rate: float = 0.03
    momentum: float = 0.0
    l2: float = 0.0
    epochs: int = 40
    seed: int = 0
    init: str = "pretrained"  # or "random"
    init_scale: float = 0.01
    bow: bool = False
    patience: int = 0  # early-stop patience in epochs; 0 disables
    pool_k: float = 0.6

    def __post_init__(self):
        if min(self.n_features, self.n_conv, self.n_hidden) < 1:
            raise ValidationError("layer sizes must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")
        if self.init not in ("pretrained", "random"):
            raise ValidationError(f"unknown init mode: {self.init!r}")


def init_model_params(n_symbols: int, n_classes: int, config: TrainConfig,
                      rng: SeededRng,
                      pretrained: tuple[EmbeddingTable, CodingParams] | None = None) -> ModelParams:
    """Starting parameters: combination matrices are identity, the embedding
    and coding tensors come from pretraining when given, everything else is
    uniform in [-init_scale, init_scale]."""
    f, c, h = config.n_features, config.n_conv, config.n_hidden
    s = config.init_scale
    bow_dim = (n_symbols + 1) if config.bow else 0

    if pretrained is not None:
        emb, cp = pretrained
        if emb.n_features != f or cp.w_left.shape != (f, f):
            raise ValidationError("pretrained tables do not match n_features")
        if emb.n_symbols != n_symbols:
            raise ValidationError("pretrained vocabulary size does not match the dataset")
        embeddings = emb.vectors.copy()
        w_code_left, w_code_right = cp.w_left.copy(), cp.w_right.copy()
        b_code = cp.bias.copy()
    else:
        embeddings = np.zeros((n_symbols + 1, f))
        embeddings[:n_symbols] = rng.uniform(-s, s, (n_symbols, f))
        embeddings[n_symbols] = embeddings[:n_symbols].mean(axis=0)
        w_code_left = rng.uniform(-s, s, (f, f))
        w_code_right = rng.uniform(-s, s, (f, f))
        b_code = rng.uniform(-s, s, f)

    return ModelParams(
        embeddings=embeddings,
        w_code_left=w_code_left, w_code_right=w_code_right, b_code=b_code,
        w_comb1=np.eye(f), w_comb2=np.eye(f),
        w_conv_top=rng.uniform(-s, s, (c, f)),
        w_conv_left=rng.uniform(-s, s, (c, f)),
        w_conv_right=rng.uniform(-s, s, (c, f)),
        b_conv=rng.uniform(-s, s, c),
        w_hidden=rng.uniform(-s, s, (h, 3 * c + bow_dim)),
        b_hidden=rng.uniform(-s, s, h),
        w_out=rng.uniform(-s, s, (n_classes, h)),
        b_out=rng.uniform(-s, s, n_classes),
        pool_k=config.pool_k,
    )


def _bow_counts(ct: CompiledTree, dim: int) -> np.ndarray:
    return np.bincount(ct.syms, minlength=dim)


def _mean_cost(params: ModelParams, compiled: list[CompiledTree],
               labels: np.ndarray, indices, bow_dim: int) -> float:
    total = 0.0
    for i in indices:
        bow = _bow_counts(compiled[i], bow_dim) if bow_dim else None
        probs, _ = forward(compiled[i], params, bow)
        total += cross_entropy(probs, int(labels[i]))
    return total / len(indices)


def train(ds: LabeledDataset, split: SplitSpec, config: TrainConfig,
          pretrained: tuple[EmbeddingTable, CodingParams] | None = None,
          n_symbols: int | None = None,
          ) -> tuple[ModelParams, list[tuple[int, float, float]]]:
    """Supervised training; returns the best-CV-epoch parameters and the
    per-epoch (epoch, train cost, cv cost) learning curve.

    The train cost is the mean loss observed while traversing the shuffled
    epoch; the CV cost is evaluated after the epoch's updates. ``n_symbols``
    defaults to the largest symbol id present in the data plus one; pass the
    vocabulary size explicitly when the dataset may not use every symbol.
    """
    if config.init == "pretrained" and pretrained is None:
        raise ValidationError("init='pretrained' requires pretrained tables")
    if n_symbols is None:
        n_symbols = _dataset_n_symbols(ds)
    rng = SeededRng(config.seed)
    params = init_model_params(n_symbols, ds.n_classes, config, rng,
                               pretrained if config.init == "pretrained" else None)
    params.validate_shapes()

    labels = ds.labels()
    compiled = [compile_tree(annotated, config.pool_k) for annotated, _ in ds.samples]
    bow_dim = params.bow_dim
    state = MomentumState()
    param_dict = params.tensors()

    curve: list[tuple[int, float, float]] = []
    best_params = params.copy()
    best_cv = np.inf
    best_epoch = 0
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(split.train))
        total = 0.0
        for k in order:
            i = split.train[int(k)]
            bow = _bow_counts(compiled[i], bow_dim) if bow_dim else None
            probs, trace = forward(compiled[i], params, bow)
            loss = cross_entropy(probs, int(labels[i]))
            if not np.isfinite(loss):
                raise NumericsError(
                    f"training diverged at epoch {epoch} on sample {i}: loss={loss}")
            total += loss
            grads = backward(trace, int(labels[i]), params)
            sgd_momentum_step(param_dict, grads, state, config.learning_rate,
                              config.momentum, config.l2, WEIGHT_MATRICES)
        train_cost = total / len(split.train)
        cv_cost = _mean_cost(params, compiled, labels, split.cv, bow_dim)
        curve.append((epoch, train_cost, cv_cost))
        if cv_cost < best_cv:
            best_cv = cv_cost
            best_params = params.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if config.patience and since_best >= config.patience:
                log.info("early stop after epoch %d (best epoch %d)", epoch, best_epoch)
                break
    return best_params, curve


def _dataset_n_symbols(ds: LabeledDataset) -> int:
    # The embedding table ends with the reserved unknown row, so the table
    # size is one more than the largest real symbol id in play.
    top = 0
    for annotated, _ in ds.samples:
        top = max(top, max(annotated.ast.symbols))
    return top + 1


@dataclass
class Metrics:
    error_rate: float  # percent in [0, 100]
    mean_cost: float
    confusion: np.ndarray  # (n_classes, n_classes), rows = true label

    def to_doc(self) -> dict:
        return {
            "error_rate": self.error_rate,
            "mean_cost": self.mean_cost,
            "confusion": self.confusion.tolist(),
        }


def evaluate(params: ModelParams, ds: LabeledDataset, indices) -> Metrics:
    """Argmax prediction over ``indices``; error rate is 100 * (1 - accuracy)."""
    indices = list(indices)
    if not indices:
        raise ValidationError("empty index list")
    labels = ds.labels()
    confusion = np.zeros((ds.n_classes, ds.n_classes), dtype=np.int64)
    total = 0.0
    correct = 0
    for i in indices:
        annotated, _ = ds.samples[i]
        ct = compile_tree(annotated, params.pool_k)
        bow = _bow_counts(ct, params.bow_dim) if params.bow_dim else None
        probs, _ = forward(ct, params, bow)
        total += cross_entropy(probs, int(labels[i]))
        pred = int(np.argmax(probs))
        confusion[int(labels[i]), pred] += 1
        correct += pred == int(labels[i])
    error = 100.0 * (1.0 - correct / len(indices))
    return Metrics(error, total / len(indices), confusion)


# ---------------------------------------------------------------------------
# Checkpoint and report files
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: ModelParams, vocab: Vocab, meta: dict | None = None) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "hyperparams": {
            "n_features": params.n_features,
            "n_conv": params.n_conv,
            "n_hidden": params.n_hidden,
            "n_classes": params.n_classes,
            "pool_k": params.pool_k,
            "bow_dim": params.bow_dim,
        },
        "vocab": list(vocab.symbols),
        "tensors": {name: t.tolist() for name, t in params.tensors().items()},
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelParams, Vocab, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"corrupt checkpoint: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ValidationError("not a model checkpoint")
    if doc.get("version") != MODEL_VERSION:
        raise ValidationError(f"unsupported checkpoint version: {doc.get('version')!r}")
    tensors = {name: np.array(value, dtype=np.float64)
               for name, value in doc["tensors"].items()}
    for name, t in tensors.items():
        if not np.all(np.isfinite(t)):
            raise ValidationError(f"checkpoint tensor {name!r} contains non-finite values")
    try:
        params = ModelParams(**tensors, pool_k=float(doc["hyperparams"]["pool_k"]))
    except TypeError as exc:
        raise ValidationError(f"checkpoint tensors incomplete: {exc}") from None
    params.validate_shapes()
    hp = doc["hyperparams"]
    for key, actual in (("n_features", params.n_features), ("n_conv", params.n_conv),
                        ("n_hidden", params.n_hidden), ("n_classes", params.n_classes),
                        ("bow_dim", params.bow_dim)):
        if hp.get(key) != actual:
            raise ValidationError(f"checkpoint header {key}={hp.get(key)} disagrees with tensors ({actual})")
    vocab = Vocab(doc["vocab"])
    if params.embeddings.shape[0] != len(vocab) + 1:
        raise ValidationError("embedding table size disagrees with the vocabulary")
    return params, vocab, doc.get("meta", {})


def save_curve(path, curve: list[tuple[int, float, float]]) -> None:
    """Learning curve as a tab-delimited table for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_cost\tcv_cost\n")
        for epoch, train_cost, cv_cost in curve:
            fh.write(f"{epoch}\t{train_cost!r}\t{cv_cost!r}\n")


def load_curve(path) -> list[tuple[int, float, float]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "epoch\ttrain_cost\tcv_cost":
            raise ValidationError("not a learning-curve file")
        for line in fh:
            epoch, train_cost, cv_cost = line.strip().split("\t")
            rows.append((int(epoch), float(train_cost), float(cv_cost)))
    return rows


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_train_config(text: str) -> TrainConfig:
    """key = value lines mirroring `TrainConfig`; '#' starts a comment."""
    overrides = {}
    field_types = {f.name: f.type for f in fields(TrainConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in field_types:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        kind = field_types[key]
        try:
            if kind == "bool":
                low = value.lower()
                if low in _TRUE:
                    overrides[key] = True
                elif low in _FALSE:
                    overrides[key] = False
                else:
                    raise ValueError(f"not a boolean: {value!r}")
            elif kind == "int":
                overrides[key] = int(value)
            elif kind == "float":
                overrides[key] = float(value)
            else:
                overrides[key] = value
        except ValueError as exc:
            raise ValidationError(f"config line {lineno}: {exc}") from None
    return TrainConfig(**overrides)


def load_train_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_train_config(fh.read())
