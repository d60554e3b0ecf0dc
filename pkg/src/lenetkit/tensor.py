"""Dense float64 tensors and the small set of array operations the layers use.

A tensor here is a plain C-order ``numpy.ndarray`` of ``float64``: the shape
tuple plus a flat row-major buffer, which is exactly the value model the rest
of the engine assumes. The functions below add the loud shape checking the
layers rely on — there is deliberately no broadcasting.

Tensors are treated as immutable values: operations return new arrays and
never write to their inputs. (Parameter updates are the one sanctioned
mutation and live in the optimizer.)
"""

from __future__ import annotations

from math import prod
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidShape

Tensor = np.ndarray


def _check_dims(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise InvalidShape("tensor shape must have at least one dimension")
    if any(d < 1 for d in shape):
        raise InvalidShape(f"all dimensions must be >= 1, got {shape}")
    return shape


def tensor(values) -> Tensor:
    """Build a float64 tensor from nested sequences (row-major)."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim == 0:
        raise InvalidShape("scalar input has no shape; wrap it in a list")
    return arr


def zeros(shape: Sequence[int]) -> Tensor:
    """All-zero tensor of the given shape. Dimensions must be >= 1."""
    return np.zeros(_check_dims(shape), dtype=np.float64)


def zeros_like(t: Tensor) -> Tensor:
    return np.zeros_like(t, dtype=np.float64)


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    """Reinterpret ``t`` with a new shape, preserving row-major element order."""
    new_shape = _check_dims(new_shape)
    if prod(new_shape) != t.size:
        raise InvalidShape(
            f"cannot reshape {t.size} elements into {new_shape}"
        )
    return np.reshape(t, new_shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Rank-2 matrix product: c[i, j] = sum_k a[i, k] * b[k, j]."""
    if a.ndim != 2 or b.ndim != 2:
        raise InvalidShape(
            f"matmul expects rank-2 operands, got ranks {a.ndim} and {b.ndim}"
        )
    if a.shape[1] != b.shape[0]:
        raise InvalidShape(
            f"inner dimensions differ: {a.shape} x {b.shape}"
        )
    return a @ b


def ew_binary(op: str, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add/sub/mul of two identically shaped tensors."""
    if a.shape != b.shape:
        raise InvalidShape(f"elementwise shapes differ: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise InvalidShape(f"unknown elementwise op {op!r}")


def ew_map(f: Callable[[float], float], a: Tensor) -> Tensor:
    """Apply a scalar function to every element, preserving shape."""
    return np.vectorize(f, otypes=[np.float64])(a)
