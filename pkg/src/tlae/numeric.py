"""Dense float64 array primitives and seeded random streams.

Everything in the package operates on 2-D numpy arrays of dtype float64
in row-major (C) order. The helpers here add the shape and domain checks
the rest of the code relies on, plus a deterministic random stream type
addressed by a (seed, stream_id) pair.

Random numbers come from numpy's Philox 4x64 counter-based generator
keyed on both integers; normal variates use numpy's ziggurat sampler.
Bit reproducibility of sampled values is therefore scoped to a fixed
numpy version (pinned by the environment, not by this code).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

_MASK64 = (1 << 64) - 1


def as_matrix(a) -> np.ndarray:
    """Coerce to a C-ordered float64 2-D array without copying when possible."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit dimension check.

    Raises ShapeError naming both operand shapes when the inner
    dimensions disagree.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


_UNARY = {
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
    "sigmoid": sigmoid,
    "exp": np.exp,
    "abs": np.abs,
}

_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def ew(op: str, a, b=None) -> np.ndarray:
    """Elementwise math over matrices.

    Unary ops: relu, tanh, sigmoid, exp, log, abs. Binary ops (requiring
    equal shapes): add, sub, mul. `log` raises NumericError on any
    non-positive entry rather than returning -inf/nan.
    """
    a = as_matrix(a)
    if op == "log":
        if b is not None:
            raise ShapeError("ew: 'log' is unary")
        if np.any(a <= 0.0):
            raise NumericError("ew: log of non-positive entry")
        return np.log(a)
    if op in _UNARY:
        if b is not None:
            raise ShapeError(f"ew: '{op}' is unary")
        return _UNARY[op](a)
    if op in _BINARY:
        if b is None:
            raise ShapeError(f"ew: '{op}' needs two operands")
        b = as_matrix(b)
        if a.shape != b.shape:
            raise ShapeError(f"ew: shape mismatch {a.shape} vs {b.shape}")
        return _BINARY[op](a, b)
    raise ShapeError(f"ew: unknown op '{op}'")


class RngStream:
    """Deterministic random stream identified by (seed, stream_id).

    Two streams constructed with the same pair replay the identical
    value sequence; distinct stream ids give statistically independent
    sequences. A stream is single-owner: do not share one instance
    across concurrent tasks, derive children with distinct ids instead.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen = np.random.Generator(
            np.random.Philox(key=[self.seed & _MASK64, self.stream_id & _MASK64])
        )

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, stream_id: int) -> "RngStream":
        """Fresh independent stream under the same seed."""
        return RngStream(self.seed, stream_id)

    def normal(self, rows: int, cols: int) -> np.ndarray:
        if rows < 1 or cols < 1:
            raise ShapeError(f"normal: dimensions must be positive, got {rows}x{cols}")
        return self._gen.standard_normal((rows, cols))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)


def sample_std_normal(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    """rows x cols matrix of i.i.d. standard normal draws from `rng`."""
    return rng.normal(rows, cols)
