"""Central finite-difference verification of every analytic gradient.

A coordinate's error is |analytic - numeric| / max(|analytic|, |numeric|,
atol/rtol); it passes when the error is <= rtol. The scale floor keeps the
measure defined at coordinates whose true gradient is exactly zero (for
example convolution weights in windows that max pooling never routes
through), where finite differences see only rounding noise and a bare
relative error would be 0/0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from treeconv.datagen import random_tree
from treeconv.errors import NumericsError
from treeconv.network import ModelParams, backward, compile_tree, cross_entropy, forward
from treeconv.numerics import SeededRng
from treeconv.pretrain import (
    CodingParams,
    EmbeddingTable,
    PretrainSample,
    hinge_loss_and_grads,
    negative_sample,
)
from treeconv.trees import annotate

DEFAULT_H = 1e-5
DEFAULT_RTOL = 1e-4
DEFAULT_ATOL = 1e-7


@dataclass
class TensorCheck:
    name: str
    n_coords: int
    max_rel_err: float
    worst: tuple[float, float]  # (analytic, numeric) at the worst coordinate
    passed: bool


def check_tensor_grads(tensors: dict[str, np.ndarray], analytic: dict[str, np.ndarray],
                       loss_fn: Callable[[], float], rng: SeededRng,
                       coords_per_tensor: int = 20, h: float = DEFAULT_H,
                       rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> list[TensorCheck]:
    """Probe random coordinates of every tensor with central differences.

    ``loss_fn`` must recompute the loss from the current tensor contents;
    entries are perturbed in place and restored.
    """
    checks = []
    for name, tensor in tensors.items():
        flat = tensor.reshape(-1)
        n_coords = min(coords_per_tensor, flat.size)
        coords = rng.permutation(flat.size)[:n_coords]
        worst = (0.0, 0.0)
        max_err = 0.0
        scale_floor = atol / rtol
        for c in coords:
            original = flat[c]
            flat[c] = original + h
            plus = loss_fn()
            flat[c] = original - h
            minus = loss_fn()
            flat[c] = original
            numeric = (plus - minus) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[c])
            err = abs(a - numeric) / max(abs(a), abs(numeric), scale_floor)
            if err > max_err:
                max_err = err
                worst = (a, numeric)
        checks.append(TensorCheck(name, int(n_coords), max_err, worst, max_err <= rtol))
    return checks


def model_gradient_checks(seed: int, dims: int = 4, n_classes: int = 3,
                          n_symbols: int = 6, coords_per_tensor: int = 20) -> list[TensorCheck]:
    """Finite-difference check of the supervised loss on one random tree."""
    rng = SeededRng(seed)
    n_nodes = int(rng.integers(8, 16))
    tree = annotate(random_tree(rng, n_nodes, n_symbols))
    label = int(rng.integers(0, n_classes))
    params = ModelParams.zeros(n_symbols, dims, dims, dims, n_classes)
    tensors = params.tensors()
    for t in tensors.values():
        t += rng.uniform(-0.5, 0.5, t.shape)
    ct = compile_tree(tree, params.pool_k)

    def loss_fn() -> float:
        probs, _ = forward(ct, params)
        return cross_entropy(probs, label)

    _, trace = forward(ct, params)
    analytic = backward(trace, label, params)
    return check_tensor_grads(tensors, analytic, loss_fn, rng, coords_per_tensor)


def pretrain_gradient_checks(seed: int, dims: int = 4, n_symbols: int = 5,
                             coords_per_tensor: int = 20) -> list[TensorCheck]:
    """Finite-difference check of the margin objective on one random window."""
    rng = SeededRng(seed)
    n_children = int(rng.integers(2, 5))
    raw = rng.uniform(0.2, 1.0, n_children)
    weights = tuple(float(w) for w in raw / raw.sum())
    sample = PretrainSample(
        parent=int(rng.integers(0, n_symbols)),
        children=tuple(int(rng.integers(0, n_symbols)) for _ in range(n_children)),
        weights=weights,
    )
    emb = EmbeddingTable(rng.uniform(-0.5, 0.5, (n_symbols + 1, dims)))
    cp = CodingParams(rng.uniform(-0.5, 0.5, (dims, dims)),
                      rng.uniform(-0.5, 0.5, (dims, dims)),
                      rng.uniform(-0.5, 0.5, dims))
    margin = 1.0
    negative = negative_sample(sample, n_symbols, rng)
    loss, analytic = hinge_loss_and_grads(sample, negative, emb, cp, margin)
    while analytic is None:  # hinge inactive for this corruption; redraw
        negative = negative_sample(sample, n_symbols, rng)
        loss, analytic = hinge_loss_and_grads(sample, negative, emb, cp, margin)

    tensors = {
        "embeddings": emb.vectors,
        "w_code_left": cp.w_left,
        "w_code_right": cp.w_right,
        "b_code": cp.bias,
    }

    def loss_fn() -> float:
        value, _ = hinge_loss_and_grads(sample, negative, emb, cp, margin)
        return value

    return check_tensor_grads(tensors, analytic, loss_fn, rng, coords_per_tensor)


@dataclass
class GradCheckReport:
    checks: list[TensorCheck]
    seeds: list[int]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def lines(self) -> list[str]:
        worst: dict[str, TensorCheck] = {}
        for c in self.checks:
            if c.name not in worst or c.max_rel_err > worst[c.name].max_rel_err:
                worst[c.name] = c
        out = [f"seeds: {', '.join(str(s) for s in self.seeds)}"]
        for name, c in worst.items():
            flag = "ok" if all(x.passed for x in self.checks if x.name == name) else "FAIL"
            out.append(f"  {name:<14} max rel err {c.max_rel_err:.3e}  [{flag}]")
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"{verdict}, max rel err {self.max_rel_err:.3e}")
        return out


def run_full_check(seed: int = 0, dims: int = 4, n_seeds: int = 5) -> GradCheckReport:
    """Model and pretraining objectives across ``n_seeds`` consecutive seeds."""
    seeds = [seed + k for k in range(n_seeds)]
    checks: list[TensorCheck] = []
    for s in seeds:
        checks.extend(model_gradient_checks(s, dims))
        checks.extend(pretrain_gradient_checks(s, dims))
    return GradCheckReport(checks, seeds)


def require_pass(report: GradCheckReport) -> None:
    if not report.passed:
        raise NumericsError("gradient check failed:\n" + "\n".join(report.lines()))
