"""Minimal dense numeric kernel used by the recurrent cells.

Vectors are 1-D and matrices 2-D numpy arrays, always float64: the
gradient checks in this package target 1e-5 relative error against
central finite differences, which single precision cannot reach.

Every stochastic operation in the package draws from :class:`Rng`, a
counter-based Philox generator keyed by ``(seed, stream)``.  Two
instances built from the same pair yield the same draw sequence on any
platform, and disjoint stream ids give independent streams, so parallel
work (search trials, folds) stays reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import StructuralError

_MASK64 = 0xFFFF_FFFF_FFFF_FFFF


class Rng:
    """Seeded, splittable random source (Philox 4x64, keyed by seed and stream)."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def derive(self, stream: int) -> "Rng":
        """Fresh generator on an independent stream of the same seed."""
        return Rng(self.seed, stream)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self._gen.choice(n, size=k, replace=False)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"


def sigmoid(v: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, overflow-safe on both tails."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tanh(v: np.ndarray) -> np.ndarray:
    """Elementwise hyperbolic tangent."""
    return np.tanh(np.asarray(v, dtype=np.float64))


def softmax(v: np.ndarray) -> np.ndarray:
    """Probability distribution over the last axis.

    Uses max-subtraction, so arbitrarily large inputs cannot overflow and
    adding a constant to every input leaves the output unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit shape check."""
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise StructuralError(
            f"matvec shape mismatch: matrix {m.shape} x vector {v.shape}"
        )
    return m @ v


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of two same-length vectors."""
    if a.shape != b.shape:
        raise StructuralError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def concat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Concatenate two vectors, first argument first."""
    if a.ndim != 1 or b.ndim != 1:
        raise StructuralError(f"concat expects vectors, got {a.shape} and {b.shape}")
    return np.concatenate([a, b])


def glorot_uniform(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """Weight matrix with entries i.i.d. uniform on +-sqrt(6/(rows+cols))."""
    if rows < 1 or cols < 1:
        raise StructuralError(f"glorot_uniform needs positive dims, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def require_finite(arr: np.ndarray, name: str) -> np.ndarray:
    """Reject NaN/Inf in values arriving from external data."""
    if not np.all(np.isfinite(arr)):
        raise StructuralError(f"non-finite values in {name}")
    return arr
