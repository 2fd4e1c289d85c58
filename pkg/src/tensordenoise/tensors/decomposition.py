"""Tucker (HOSVD / HOOI) and tensor-train (TT-SVD) low-rank approximation."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from math import prod
from typing import Any, Literal

import numpy as np
import tensorly as tl
from numpy.typing import NDArray

from ..errors import ArgumentError, ShapeError
from .core import (
    DenseTensor,
    Matrix,
    as_tensor,
    frobenius_norm,
    matricize,
    relative_error,
    require_finite,
    svd,
)

logger = logging.getLogger("tensordenoise.decomp")

DEFAULT_HOOI_MAX_ITERS = 25
DEFAULT_HOOI_TOL = 1e-6


@dataclass(frozen=True)
class TuckerFactors:
    core: DenseTensor
    factors: tuple[Matrix, ...]
    source_shape: tuple[int, ...]

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(self.core.shape)

    @property
    def element_count(self) -> int:
        return self.core.size + sum(a.size for a in self.factors)


@dataclass(frozen=True)
class TTFactors:
    cores: tuple[DenseTensor, ...]

    @property
    def ranks(self) -> tuple[int, ...]:
        return (self.cores[0].shape[0], *(c.shape[2] for c in self.cores))

    @property
    def source_shape(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def element_count(self) -> int:
        return sum(c.size for c in self.cores)


@dataclass(frozen=True)
class DecompositionReport:
    relative_error: float
    iterations: int
    ranks_used: tuple[int, ...]
    compression_ratio: float
    truncation_residuals: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "relative_error": self.relative_error,
            "iterations": self.iterations,
            "ranks_used": list(self.ranks_used),
            "compression_ratio": self.compression_ratio,
        }
        if self.truncation_residuals:
            out["truncation_residuals"] = list(self.truncation_residuals)
        return out


def rank_clamp(
    requested: Sequence[int],
    shape: Sequence[int],
    method: Literal["tucker", "tt"] = "tucker",
) -> tuple[int, ...]:
    # TT ranks are the full chain [r_0, ..., r_N] with boundary ranks 1
    requested = [int(r) for r in requested]
    shape = [int(d) for d in shape]
    if any(r < 1 for r in requested):
        raise ArgumentError(f"ranks must be >= 1, got {requested}")
    if method == "tucker":
        if len(requested) != len(shape):
            raise ArgumentError(f"{len(requested)} Tucker ranks for a {len(shape)}-axis tensor")
        return tuple(min(r, d) for r, d in zip(requested, shape))
    if method == "tt":
        if len(requested) != len(shape) + 1:
            raise ArgumentError(
                f"TT rank chain needs {len(shape) + 1} entries for a {len(shape)}-axis tensor"
            )
        chain = [1]
        for n in range(1, len(shape)):
            chain.append(min(requested[n], prod(shape[:n]), prod(shape[n:])))
        chain.append(1)
        return tuple(chain)
    raise ArgumentError(f"unknown decomposition method {method!r}")


def mode_spectrum(t: DenseTensor, mode: int) -> NDArray[np.float64]:
    return svd(matricize(t, mode)).singular_values


def leading_left_vectors(t: DenseTensor, mode: int, rank: int) -> Matrix:
    m = matricize(t, mode)
    # a thin SVD has only min(rows, cols) columns; complete the basis if needed
    res = svd(m, full_matrices=rank > min(m.shape))
    return np.ascontiguousarray(res.u[:, :rank])


def _project(t: DenseTensor, factors: Sequence[Matrix], skip: int | None = None) -> DenseTensor:
    out = tl.tenalg.multi_mode_dot(t, list(factors), skip=skip, transpose=True)
    return np.ascontiguousarray(out, dtype=np.float64)


def _prepare(t: DenseTensor, ranks: Sequence[int]) -> tuple[DenseTensor, tuple[int, ...]]:
    t = as_tensor(t)
    require_finite(t)
    clamped = rank_clamp(ranks, t.shape, "tucker")
    if list(clamped) != [int(r) for r in ranks]:
        logger.warning(
            "Tucker ranks %s clamped to %s for shape %s", list(ranks), list(clamped), t.shape
        )
    return t, clamped


def tucker_hosvd(t: DenseTensor, ranks: Sequence[int]) -> TuckerFactors:
    t, clamped = _prepare(t, ranks)
    factors = tuple(leading_left_vectors(t, n, r) for n, r in enumerate(clamped))
    return TuckerFactors(core=_project(t, factors), factors=factors, source_shape=t.shape)


def tucker_reconstruct(f: TuckerFactors) -> DenseTensor:
    if len(f.factors) != f.core.ndim or len(f.source_shape) != f.core.ndim:
        raise ShapeError(
            f"{len(f.factors)} factors for a {f.core.ndim}-axis core "
            f"and source shape {f.source_shape}"
        )
    for n, a in enumerate(f.factors):
        if a.shape != (f.source_shape[n], f.core.shape[n]):
            raise ShapeError(
                f"factor {n} has shape {a.shape}, expected "
                f"{(f.source_shape[n], f.core.shape[n])}"
            )
    out = tl.tucker_to_tensor((f.core, list(f.factors)))
    return np.ascontiguousarray(out, dtype=np.float64)


def _tucker_report(t: DenseTensor, f: TuckerFactors, iterations: int) -> DecompositionReport:
    return DecompositionReport(
        relative_error=relative_error(t, tucker_reconstruct(f)),
        iterations=iterations,
        ranks_used=f.ranks,
        compression_ratio=t.size / f.element_count,
    )


def tucker_hosvd_report(
    t: DenseTensor, ranks: Sequence[int]
) -> tuple[TuckerFactors, DecompositionReport]:
    f = tucker_hosvd(t, ranks)
    return f, _tucker_report(as_tensor(t), f, iterations=0)


def tucker_hooi(
    t: DenseTensor,
    ranks: Sequence[int],
    max_iters: int = DEFAULT_HOOI_MAX_ITERS,
    tol: float = DEFAULT_HOOI_TOL,
) -> tuple[TuckerFactors, DecompositionReport]:
    """Alternating refinement of the HOSVD factors.

    Stops once a sweep improves the relative error by less than `tol`. The
    best factors seen are returned, so the result is never worse than HOSVD.
    """
    if max_iters < 1:
        raise ArgumentError(f"max_iters must be >= 1, got {max_iters}")
    if not tol > 0:
        raise ArgumentError(f"tol must be > 0, got {tol}")
    t, clamped = _prepare(t, ranks)

    best = tucker_hosvd(t, clamped)
    best_err = relative_error(t, tucker_reconstruct(best))
    factors = list(best.factors)
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        for n, r in enumerate(clamped):
            factors[n] = leading_left_vectors(_project(t, factors, skip=n), n, r)
        candidate = TuckerFactors(
            core=_project(t, factors), factors=tuple(factors), source_shape=t.shape
        )
        err = relative_error(t, tucker_reconstruct(candidate))
        improvement = best_err - err
        if err <= best_err:
            best, best_err = candidate, err
        if improvement < tol:
            break
    logger.debug(
        "HOOI on %s ranks %s: %d sweeps, error %.3e", t.shape, clamped, iterations, best_err
    )
    return best, DecompositionReport(
        relative_error=best_err,
        iterations=iterations,
        ranks_used=best.ranks,
        compression_ratio=t.size / best.element_count,
    )


def tt_svd(t: DenseTensor, max_ranks: Sequence[int]) -> tuple[TTFactors, DecompositionReport]:
    """Left-to-right TT-SVD. `max_ranks` holds the interior ranks r_1..r_{N-1}.

    The recorded residuals are the Frobenius norms of the singular values
    dropped at each step; their root-sum-square equals the total error.
    """
    t = as_tensor(t)
    require_finite(t)
    shape = t.shape
    if len(max_ranks) != len(shape) - 1:
        raise ArgumentError(f"{len(max_ranks)} TT ranks for a {len(shape)}-axis tensor")
    chain = rank_clamp([1, *max_ranks, 1], shape, "tt")
    if list(chain[1:-1]) != [int(r) for r in max_ranks]:
        logger.warning(
            "TT ranks %s clamped to %s for shape %s", list(max_ranks), list(chain[1:-1]), shape
        )

    cores: list[DenseTensor] = []
    residuals: list[float] = []
    r_prev = 1
    rest = t
    for k in range(len(shape) - 1):
        res = svd(rest.reshape(r_prev * shape[k], -1))
        s = res.singular_values
        r = min(chain[k + 1], s.shape[0])
        residuals.append(frobenius_norm(s[r:]))
        cores.append(np.ascontiguousarray(res.u[:, :r]).reshape(r_prev, shape[k], r))
        rest = s[:r, None] * res.vt[:r]
        r_prev = r
    cores.append(np.ascontiguousarray(rest).reshape(r_prev, shape[-1], 1))

    f = TTFactors(cores=tuple(cores))
    report = DecompositionReport(
        relative_error=relative_error(t, tt_reconstruct(f)),
        iterations=0,
        ranks_used=f.ranks,
        compression_ratio=t.size / f.element_count,
        truncation_residuals=tuple(residuals),
    )
    return f, report


def tt_reconstruct(f: TTFactors) -> DenseTensor:
    if not f.cores:
        raise ShapeError("a TT decomposition needs at least one core")
    for n, c in enumerate(f.cores):
        if c.ndim != 3:
            raise ShapeError(f"TT core {n} must have 3 axes, got {c.shape}")
        if n and c.shape[0] != f.cores[n - 1].shape[2]:
            raise ShapeError(
                f"TT core {n} leading rank {c.shape[0]} != trailing rank "
                f"{f.cores[n - 1].shape[2]} of core {n - 1}"
            )
    if f.cores[0].shape[0] != 1 or f.cores[-1].shape[2] != 1:
        raise ShapeError("TT boundary ranks must be 1")

    return np.ascontiguousarray(tl.tt_to_tensor(list(f.cores)), dtype=np.float64)
