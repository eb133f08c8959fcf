"""Symbol-counting features and linear classifiers over them.

The counting feature vector of a tree is the number of occurrences of each
vocabulary symbol (plus a trailing unknown bucket); all structure is
discarded. Two linear models train on these features: multinomial logistic
regression and a one-vs-rest hinge ("linear SVM"), both by per-sample SGD
with optional weight decay.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from treeconv.errors import NumericsError, ValidationError
from treeconv.numerics import SeededRng, softmax
from treeconv.trees import Ast, Vocab

log = logging.getLogger(__name__)

BASELINE_FORMAT = "treeconv-baseline"
BASELINE_VERSION = 1

LOSS_KINDS = ("logistic", "hinge")


def bow_features(ast: Ast, vocab: Vocab) -> np.ndarray:
    """Occurrence count per symbol id; index len(vocab) is the unknown bucket.

    The counts sum to the node count of the tree.
    """
    dim = len(vocab) + 1
    syms = np.minimum(np.array(ast.symbols, dtype=np.int64), vocab.unk_id)
    return np.bincount(syms, minlength=dim)


def combine_pooled_bow(pooled_parts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenate pooled convolution features with log(1 + count) features."""
    return np.concatenate([np.asarray(pooled_parts, dtype=np.float64).ravel(),
                           np.log1p(np.asarray(counts, dtype=np.float64))])


@dataclass
class LinearModel:
    weights: np.ndarray  # (n_classes, dim)
    bias: np.ndarray  # (n_classes,)
    loss: str  # "logistic" | "hinge"

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def scores(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ np.asarray(x, dtype=np.float64) + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        z = np.asarray(features, dtype=np.float64) @ self.weights.T + self.bias
        return np.argmax(z, axis=1)


def train_linear(features: np.ndarray, labels: np.ndarray, loss: str = "logistic",
                 learning_rate: float = 0.01, l2: float = 0.0, epochs: int = 50,
                 seed: int = 0) -> LinearModel:
    """Per-sample SGD on softmax cross-entropy or one-vs-rest hinge."""
    if loss not in LOSS_KINDS:
        raise ValidationError(f"unknown loss kind: {loss!r}")
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValidationError("features must be (n_samples, dim) matching labels")
    n_classes = int(y.max()) + 1
    w = np.zeros((n_classes, x.shape[1]))
    b = np.zeros(n_classes)
    rng = SeededRng(seed)
    for _ in range(epochs):
        for k in rng.permutation(len(y)):
            xi, yi = x[k], int(y[k])
            z = w @ xi + b
            if loss == "logistic":
                dz = softmax(z)
                dz[yi] -= 1.0
            else:
                # One binary hinge per class: the true class is the +1 target.
                target = np.full(n_classes, -1.0)
                target[yi] = 1.0
                dz = np.where(target * z < 1.0, -target, 0.0)
            if not np.all(np.isfinite(dz)):
                raise NumericsError("linear model diverged (non-finite update)")
            w -= learning_rate * (np.outer(dz, xi) + l2 * w)
            b -= learning_rate * dz
    return LinearModel(w, b, loss)


def error_rate(model: LinearModel, features: np.ndarray, labels: np.ndarray) -> float:
    pred = model.predict(features)
    return 100.0 * float(np.mean(pred != np.asarray(labels)))


def save_baseline(path, model: LinearModel, vocab: Vocab) -> None:
    doc = {
        "format": BASELINE_FORMAT,
        "version": BASELINE_VERSION,
        "loss": model.loss,
        "vocab": list(vocab.symbols),
        "weights": model.weights.tolist(),
        "bias": model.bias.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_baseline(path) -> tuple[LinearModel, Vocab]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"corrupt baseline checkpoint: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != BASELINE_FORMAT:
        raise ValidationError("not a baseline checkpoint")
    if doc.get("version") != BASELINE_VERSION:
        raise ValidationError(f"unsupported baseline version: {doc.get('version')!r}")
    model = LinearModel(np.array(doc["weights"], dtype=np.float64),
                        np.array(doc["bias"], dtype=np.float64), doc["loss"])
    if model.loss not in LOSS_KINDS or model.weights.ndim != 2:
        raise ValidationError("malformed baseline checkpoint")
    if not (np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.bias))):
        raise ValidationError("baseline checkpoint contains non-finite values")
    return model, Vocab(doc["vocab"])
