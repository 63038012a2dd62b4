"""Dense 2-D float64 arrays and the few primitives the rest of the package needs.

A ``Matrix`` is a plain C-contiguous float64 numpy array, i.e. row-major
storage, which is also the layout every file format here documents.  All
operations are pure functions of their inputs.
"""

from __future__ import annotations

import numpy as np

Matrix = np.ndarray


class ShapeError(ValueError):
    """Incompatible operand shapes."""


class EmptyInputError(ValueError):
    """Operation requires a nonempty matrix."""


def as_matrix(values) -> Matrix:
    """Coerce nested sequences (or an array) to a 2-D float64 row-major array."""
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected 2-D data, got ndim={m.ndim}")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def row_softmax(z: Matrix) -> Matrix:
    """Row-wise softmax with max-subtraction so large logits cannot overflow."""
    if z.ndim != 2:
        raise ShapeError(f"row_softmax expects a 2-D matrix, got shape {z.shape}")
    if z.shape[0] == 0:
        return np.zeros_like(z, dtype=np.float64)
    shifted = z - np.max(z, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


_REDUCERS = {"sum": np.sum, "mean": np.mean, "max": np.max}
_AXES = {"rows": 1, "cols": 0, "all": None}


def reduce(op: str, m: Matrix, axis: str = "all") -> Matrix:
    """Reduce a matrix with op in {sum, mean, max} along rows, cols, or all.

    Always returns a matrix: (R, 1) for "rows", (1, C) for "cols", (1, 1)
    for "all".
    """
    if op not in _REDUCERS:
        raise ValueError(f"unknown reduce op {op!r}")
    if axis not in _AXES:
        raise ValueError(f"unknown reduce axis {axis!r}")
    if m.size == 0:
        raise EmptyInputError(f"cannot reduce empty matrix of shape {m.shape}")
    out = _REDUCERS[op](m, axis=_AXES[axis])
    if axis == "rows":
        return np.asarray(out, dtype=np.float64).reshape(-1, 1)
    if axis == "cols":
        return np.asarray(out, dtype=np.float64).reshape(1, -1)
    return np.asarray(out, dtype=np.float64).reshape(1, 1)
