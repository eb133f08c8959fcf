"""Dense float64 primitives, a pinned seeded RNG, and SGD with momentum.

Everything is 64-bit: the gradient checks in this package assert agreement
with finite differences at 1e-4 relative tolerance, which float32 cannot
sustain. Model sizes are tiny, so there is no performance reason to drop
precision.
"""

from __future__ import annotations

import logging

import numpy as np

from treeconv.errors import ValidationError

log = logging.getLogger(__name__)


def as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValidationError(f"expected a matrix, got ndim={m.ndim}")
    return m


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError(f"expected a vector, got ndim={v.ndim}")
    return v


def matvec(m, x) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    m, x = as_matrix(m), as_vector(x)
    if m.shape[1] != x.shape[0]:
        raise ValidationError(f"dimension mismatch: {m.shape} @ {x.shape}")
    return m @ x


def tanh_map(x) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_prime(y) -> np.ndarray:
    """Derivative of tanh expressed in terms of the output: 1 - y^2."""
    y = np.asarray(y, dtype=np.float64)
    return 1.0 - y * y


def softmax(logits) -> np.ndarray:
    """Stable softmax (max-subtracted); output is positive and sums to 1."""
    z = as_vector(logits)
    z = z - np.max(z)
    e = np.exp(z)
    return e / np.sum(e)


class SeededRng:
    """Deterministic random source pinned to numpy's PCG64 generator.

    PCG64 is a published 128-bit-state generator with a 64-bit shift/rotate
    output function; a given seed yields an identical stream on every
    platform. Workers derive child generators via ``child(k)``, which mixes
    the worker index into the seed (seed XOR k) before re-seeding.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, k: int) -> "SeededRng":
        return SeededRng(self.seed ^ (int(k) & 0xFFFFFFFFFFFFFFFF))

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        """Half-open integer draw(s) from [low, high)."""
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]


class MomentumState:
    """One velocity buffer per parameter tensor, allocated lazily to shape."""

    def __init__(self):
        self.velocity: dict[str, np.ndarray] = {}

    def buffer(self, name: str, like: np.ndarray) -> np.ndarray:
        buf = self.velocity.get(name)
        if buf is None:
            buf = np.zeros_like(like)
            self.velocity[name] = buf
        elif buf.shape != like.shape:
            raise ValidationError(f"momentum buffer shape mismatch for {name!r}")
        return buf


def sgd_momentum_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                      state: MomentumState, lr: float, momentum: float = 0.0,
                      weight_decay: float = 0.0, decayed: frozenset[str] = frozenset()) -> bool:
    """One in-place update: v <- momentum*v - lr*(g + wd*theta); theta += v.

    Weight decay applies only to tensors named in ``decayed`` (weight
    matrices; never biases or the embedding table). Returns False and leaves
    everything untouched if any gradient is non-finite.
    """
    for name, g in grads.items():
        if name not in params:
            raise ValidationError(f"gradient for unknown parameter {name!r}")
        if params[name].shape != g.shape:
            raise ValidationError(f"shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            log.warning("non-finite gradient for %r; step skipped", name)
            return False
    for name, g in grads.items():
        theta = params[name]
        v = state.buffer(name, theta)
        step = g if not (weight_decay and name in decayed) else g + weight_decay * theta
        v *= momentum
        v -= lr * step
        theta += v
    return True


def rel_err(a: float, b: float) -> float:
    """Relative disagreement; 0 when both values vanish below 1e-9."""
    scale = max(abs(a), abs(b))
    if scale < 1e-9:
        return 0.0
    return abs(a - b) / scale
