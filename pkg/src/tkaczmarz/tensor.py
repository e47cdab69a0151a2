"""Dense third-order tensors and the t-product, built directly on ``bcirc``.

A tensor is a ``float64`` :class:`numpy.ndarray` of shape ``(n1, n2, n3)``
indexed ``[i, j, k]``: ``A[i]`` is the row slice, ``A[:, j]`` the column
slice and ``A[:, :, k]`` the frontal slice.  Indices are 0-based in code.

Everything here goes through the explicit block-circulant matrix and is
meant as the slow ground truth; :mod:`tkaczmarz.spectral` holds the fast
paths and is tested against this module.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import ShapeError

__all__ = [
    "as_tensor",
    "unfold",
    "fold",
    "bcirc",
    "tprod_reference",
    "ttranspose",
    "identity_tensor",
    "fro_norm",
    "inner",
    "row_slice",
    "col_slice",
]


def as_tensor(values, dims: tuple[int, int, int] | None = None) -> np.ndarray:
    """Validate and copy ``values`` into a finite float64 third-order tensor.

    Parameters
    ----------
    values : array_like
        Either an array of shape ``(n1, n2, n3)`` or, when ``dims`` is given,
        a flat sequence of ``n1*n2*n3`` scalars in row-major ``(i, j, k)`` order.
        A 2-D array is promoted to depth 1.
    dims : tuple of int, optional
        Target shape for flat input.

    Raises
    ------
    ShapeError
        Wrong number of entries or dimensions.
    ValueError
        NaN or infinite entries.
    """
    arr = np.array(values, dtype=np.float64, copy=True)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ShapeError(f"dims must be three positive integers, got {dims}")
        if arr.size != dims[0] * dims[1] * dims[2]:
            raise ShapeError(f"{arr.size} values cannot fill a tensor of dims {dims}")
        arr = arr.reshape(dims)
    elif arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"expected a third-order tensor, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite (NaN/Inf rejected)")
    return np.ascontiguousarray(arr)


def _check3(a: np.ndarray, name: str = "tensor") -> None:
    if a.ndim != 3:
        raise ShapeError(f"{name} must be third-order, got shape {a.shape}")


def unfold(b: np.ndarray) -> np.ndarray:
    """Stack the frontal slices of ``b`` vertically: ``(n1*n3, n2)``."""
    _check3(b)
    n1, n2, n3 = b.shape
    return np.ascontiguousarray(np.transpose(b, (2, 0, 1)).reshape(n3 * n1, n2))


def fold(m: np.ndarray, p: int) -> np.ndarray:
    """Inverse of :func:`unfold`; ``m`` has ``p`` row blocks."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"fold expects a matrix, got shape {m.shape}")
    if p < 1 or m.shape[0] % p:
        raise ShapeError(f"{m.shape[0]} rows are not divisible into p={p} blocks")
    n1 = m.shape[0] // p
    return np.ascontiguousarray(m.reshape(p, n1, m.shape[1]).transpose(1, 2, 0))


def bcirc(a: np.ndarray) -> np.ndarray:
    """Block-circulant matrix of ``a``; block ``(r, c)`` is frontal slice ``(r - c) mod p``."""
    _check3(a)
    n1, n2, p = a.shape
    out = np.empty((n1 * p, n2 * p), dtype=np.result_type(a.dtype, np.float64))
    for r in range(p):
        for c in range(p):
            out[r * n1:(r + 1) * n1, c * n2:(c + 1) * n2] = a[:, :, (r - c) % p]
    return out


def tprod_reference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """t-product ``a * b`` computed as ``fold(bcirc(a) @ unfold(b))``."""
    _check3(a, "left operand")
    _check3(b, "right operand")
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"cannot t-multiply {a.shape} by {b.shape}")
    return fold(bcirc(a) @ unfold(b), a.shape[2])


def ttranspose(a: np.ndarray) -> np.ndarray:
    """Tensor transpose: transpose every frontal slice, reverse slices 2..p."""
    _check3(a)
    p = a.shape[2]
    order = [(-k) % p for k in range(p)]
    return np.ascontiguousarray(np.transpose(a[:, :, order], (1, 0, 2)))


def identity_tensor(m: int, p: int) -> np.ndarray:
    """Identity tensor of shape ``(m, m, p)``."""
    if m < 1 or p < 1:
        raise ShapeError(f"identity tensor needs m >= 1 and p >= 1, got m={m}, p={p}")
    out = np.zeros((m, m, p))
    out[:, :, 0] = np.eye(m)
    return out


def fro_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(a))))


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of elementwise products of two equally shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"inner product needs equal dims, got {a.shape} and {b.shape}")
    return float(np.sum(a * b))


def _check_indices(idx: Sequence[int], size: int, what: str) -> list[int]:
    idx = [int(i) for i in idx]
    if not idx:
        raise IndexError(f"empty {what} index set")
    for i in idx:
        if i < 0 or i >= size:
            raise IndexError(f"{what} index {i} out of range [0, {size})")
    if len(set(idx)) != len(idx):
        raise IndexError(f"repeated {what} index in {idx}")
    return idx


def row_slice(a: np.ndarray, idx: Sequence[int]) -> np.ndarray:
    """Copy of the row slices ``a[idx]`` in the given order (no repeats)."""
    _check3(a)
    idx = _check_indices(idx, a.shape[0], "row")
    return a[idx].copy()


def col_slice(a: np.ndarray, j: int) -> np.ndarray:
    """Copy of column slice ``j`` as an ``(n1, 1, n3)`` tensor."""
    _check3(a)
    (j,) = _check_indices([j], a.shape[1], "column")
    return a[:, j:j + 1, :].copy()
