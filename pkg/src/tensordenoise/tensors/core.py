"""Tensors are plain float64 numpy arrays in C (row-major) order."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from math import prod
from typing import TypeAlias

import numpy as np
import scipy.linalg
import tensorly as tl
from numpy.typing import ArrayLike, NDArray

from ..errors import ArgumentError, NumericError, ShapeError

logger = logging.getLogger("tensordenoise.decomp")

DenseTensor: TypeAlias = NDArray[np.float64]
Matrix: TypeAlias = NDArray[np.float64]

_SVD_DRIVERS = ("gesdd", "gesvd")


def as_tensor(value: ArrayLike) -> DenseTensor:
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"tensor dimensions must be >= 1, got {arr.shape}")
    return arr


def require_finite(t: NDArray[np.float64], what: str = "tensor") -> None:
    if not np.all(np.isfinite(t)):
        raise NumericError(f"{what} contains non-finite values")


def reshape(t: DenseTensor, new_shape: Sequence[int]) -> DenseTensor:
    new_shape = tuple(int(d) for d in new_shape)
    if any(d < 1 for d in new_shape) or prod(new_shape) != t.size:
        raise ShapeError(f"cannot reshape {t.shape} ({t.size} elements) to {new_shape}")
    return np.reshape(t, new_shape, order="C").copy()


def permute_axes(t: DenseTensor, order: Sequence[int]) -> DenseTensor:
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(t.ndim)):
        raise ArgumentError(f"{order} is not a permutation of the {t.ndim} axes")
    return np.ascontiguousarray(np.transpose(t, order))


def inverse_permutation(order: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(order)
    for i, o in enumerate(order):
        inv[o] = i
    return tuple(inv)


def _check_mode(t: DenseTensor, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise ArgumentError(f"mode {mode} out of range for a {t.ndim}-axis tensor")


def matricize(t: DenseTensor, mode: int) -> Matrix:
    """Mode-n unfolding; columns run over the remaining axes in ascending
    axis order, row-major."""
    _check_mode(t, mode)
    return np.ascontiguousarray(tl.base.unfold(t, mode), dtype=np.float64)


def dematricize(m: Matrix, mode: int, shape: Sequence[int]) -> DenseTensor:
    shape = tuple(int(d) for d in shape)
    if not 0 <= mode < len(shape):
        raise ArgumentError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1 :]
    if m.shape != (shape[mode], prod(rest)):
        raise ShapeError(f"matrix {m.shape} does not unfold shape {shape} on mode {mode}")
    return np.ascontiguousarray(tl.base.fold(m, mode, shape), dtype=np.float64)


def n_mode_product(t: DenseTensor, m: Matrix, mode: int) -> DenseTensor:
    _check_mode(t, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ShapeError(
            f"matrix {m.shape} cannot multiply mode {mode} of size {t.shape[mode]}"
        )
    return np.ascontiguousarray(tl.tenalg.mode_dot(t, m, mode), dtype=np.float64)


@dataclass(frozen=True)
class SvdResult:
    u: Matrix
    singular_values: NDArray[np.float64]
    vt: Matrix


def svd(m: Matrix, full_matrices: bool = False) -> SvdResult:
    """Thin SVD with a fixed sign convention: the largest-magnitude entry of
    every left singular vector is non-negative (first index wins ties).

    `full_matrices=True` completes `u` to a square orthonormal basis; the
    extra columns carry no singular value.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"svd expects a matrix, got shape {m.shape}")
    require_finite(m, "matrix")

    attempts = 0
    for driver in _SVD_DRIVERS:
        attempts += 1
        try:
            u, s, vt = scipy.linalg.svd(
                m,
                full_matrices=full_matrices,
                lapack_driver=driver,
                check_finite=False,
            )
            break
        except np.linalg.LinAlgError:
            logger.warning("svd driver %s did not converge on %s matrix", driver, m.shape)
    else:
        raise NumericError(
            f"svd of {m.shape} matrix did not converge after {attempts} driver attempts"
        )

    u = np.array(u, dtype=np.float64, order="C")
    vt = np.array(vt, dtype=np.float64, order="C")
    pivots = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[pivots, np.arange(u.shape[1])] < 0.0, -1.0, 1.0)
    u *= signs
    k = s.shape[0]
    vt[:k] *= signs[:k, None]
    return SvdResult(u=u, singular_values=np.asarray(s, dtype=np.float64), vt=vt)


def frobenius_norm(t: NDArray[np.float64]) -> float:
    return float(np.sqrt(np.sum(np.square(t, dtype=np.float64))))


def relative_error(reference: DenseTensor, approx: DenseTensor) -> float:
    err = frobenius_norm(reference - approx)
    ref = frobenius_norm(reference)
    return err / ref if ref > 0.0 else err
