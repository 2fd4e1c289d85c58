"""Low-rank reparameterization of convolution kernels S[d, d, P, Q].

Tucker-2 keeps the two spatial modes dense and factors the channel modes;
deployed, it reads as a 1x1 conv (P -> R_p), a d x d conv (R_p -> R_q) and
a 1x1 conv (R_q -> Q). The TT form chains cores over (i, j, p, q). Neither
form is executed here; kernels are handled as plain tensors.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import tensorly as tl
from numpy.typing import ArrayLike

from ..errors import ArgumentError, ConfigError, ShapeError
from .core import (
    DenseTensor,
    Matrix,
    as_tensor,
    relative_error,
    require_finite,
)
from .decomposition import DecompositionReport, leading_left_vectors, mode_spectrum, tt_svd

logger = logging.getLogger("tensordenoise.decomp")


@dataclass(frozen=True)
class ConvKernel:
    tensor: DenseTensor

    def __post_init__(self) -> None:
        if self.tensor.ndim != 4:
            raise ConfigError(f"a conv kernel has 4 axes [d, d, P, Q], got {self.tensor.shape}")
        if self.tensor.shape[0] != self.tensor.shape[1]:
            raise ConfigError(f"kernel spatial dims differ: {self.tensor.shape[:2]}")

    @classmethod
    def of(cls, value: ArrayLike) -> ConvKernel:
        return cls(as_tensor(value))

    @property
    def d(self) -> int:
        return self.tensor.shape[0]

    @property
    def p_in(self) -> int:
        return self.tensor.shape[2]

    @property
    def q_out(self) -> int:
        return self.tensor.shape[3]

    @property
    def parameter_count(self) -> int:
        return self.tensor.size


@dataclass(frozen=True)
class Tucker2Kernel:
    core: DenseTensor  # [d, d, R_p, R_q]
    factor_p: Matrix  # [P, R_p]
    factor_q: Matrix  # [Q, R_q]

    @property
    def ranks(self) -> tuple[int, int]:
        return self.core.shape[2], self.core.shape[3]

    @property
    def parameter_count(self) -> int:
        return self.core.size + self.factor_p.size + self.factor_q.size


@dataclass(frozen=True)
class TTKernel:
    cores: tuple[DenseTensor, DenseTensor, DenseTensor, DenseTensor]
    # shapes [d, R1], [R1, d, R2], [R2, P, R3], [R3, Q]

    @property
    def ranks(self) -> tuple[int, int, int]:
        g1, g2, g3, _ = self.cores
        return g1.shape[1], g2.shape[2], g3.shape[2]

    @property
    def parameter_count(self) -> int:
        return sum(c.size for c in self.cores)


@dataclass(frozen=True)
class LayerShape:
    role: str
    shape: tuple[int, ...]


def _report(
    k: ConvKernel,
    approx: DenseTensor,
    ranks: tuple[int, ...],
    params: int,
    residuals: tuple[float, ...] = (),
) -> DecompositionReport:
    return DecompositionReport(
        relative_error=relative_error(k.tensor, approx),
        iterations=0,
        ranks_used=ranks,
        compression_ratio=k.parameter_count / params,
        truncation_residuals=residuals,
    )


def tucker2_factorize(
    k: ConvKernel, rank_p: int, rank_q: int
) -> tuple[Tucker2Kernel, DecompositionReport]:
    if not 1 <= rank_p <= k.p_in:
        raise ArgumentError(f"R_p must be in [1, {k.p_in}], got {rank_p}")
    if not 1 <= rank_q <= k.q_out:
        raise ArgumentError(f"R_q must be in [1, {k.q_out}], got {rank_q}")
    require_finite(k.tensor, "kernel")

    a_p = leading_left_vectors(k.tensor, 2, rank_p)
    a_q = leading_left_vectors(k.tensor, 3, rank_q)
    projected = tl.tenalg.multi_mode_dot(k.tensor, [a_p, a_q], modes=[2, 3], transpose=True)
    core = np.ascontiguousarray(projected, dtype=np.float64)
    f = Tucker2Kernel(core=core, factor_p=a_p, factor_q=a_q)
    report = _report(k, reconstruct_kernel(f).tensor, f.ranks, f.parameter_count)
    logger.info(
        "tucker2 %s ranks (%d, %d): error %.3e, ratio %.2f",
        k.tensor.shape, rank_p, rank_q, report.relative_error, report.compression_ratio,
    )
    return f, report


def tt_factorize_kernel(
    k: ConvKernel, ranks: Sequence[int]
) -> tuple[TTKernel, DecompositionReport]:
    if len(ranks) != 3:
        raise ArgumentError(f"a kernel TT needs 3 ranks [R1, R2, R3], got {list(ranks)}")
    tt, tt_report = tt_svd(k.tensor, ranks)
    c1, c2, c3, c4 = tt.cores
    f = TTKernel(cores=(c1[0], c2, c3, c4[:, :, 0]))
    approx = reconstruct_kernel(f).tensor
    report = _report(k, approx, f.ranks, f.parameter_count, tt_report.truncation_residuals)
    logger.info(
        "tt kernel %s ranks %s: error %.3e, ratio %.2f",
        k.tensor.shape, list(f.ranks), report.relative_error, report.compression_ratio,
    )
    return f, report


def reconstruct_kernel(f: Tucker2Kernel | TTKernel) -> ConvKernel:
    if isinstance(f, Tucker2Kernel):
        rp, rq = f.ranks
        if f.core.ndim != 4 or f.factor_p.shape[1] != rp or f.factor_q.shape[1] != rq:
            raise ShapeError(
                f"Tucker-2 core {f.core.shape} inconsistent with factors "
                f"{f.factor_p.shape}, {f.factor_q.shape}"
            )
        full = tl.tenalg.multi_mode_dot(f.core, [f.factor_p, f.factor_q], modes=[2, 3])
        return ConvKernel(np.ascontiguousarray(full, dtype=np.float64))

    g1, g2, g3, g4 = f.cores
    if (
        g1.ndim != 2 or g2.ndim != 3 or g3.ndim != 3 or g4.ndim != 2
        or g1.shape[1] != g2.shape[0]
        or g2.shape[2] != g3.shape[0]
        or g3.shape[2] != g4.shape[0]
    ):
        raise ShapeError(
            f"TT kernel cores do not chain: {[c.shape for c in f.cores]}"
        )
    full = tl.tt_to_tensor([g1[None], g2, g3, g4[:, :, None]])
    return ConvKernel(np.ascontiguousarray(full, dtype=np.float64))


def _energy_rank(spectrum: np.ndarray, fraction: float) -> int:
    energy = np.cumsum(np.square(spectrum))
    total = energy[-1]
    if total <= 0.0:
        return 1
    return int(np.argmax(energy >= fraction * total)) + 1


def select_ranks_energy(k: ConvKernel, energy_fraction: float) -> tuple[int, int]:
    """Smallest (R_p, R_q) keeping `energy_fraction` of each channel mode's
    squared singular values."""
    if not 0.0 < energy_fraction <= 1.0:
        raise ArgumentError(f"energy fraction must be in (0, 1], got {energy_fraction}")
    if energy_fraction == 1.0:
        return k.p_in, k.q_out
    require_finite(k.tensor, "kernel")
    return (
        _energy_rank(mode_spectrum(k.tensor, 2), energy_fraction),
        _energy_rank(mode_spectrum(k.tensor, 3), energy_fraction),
    )


def layer_plan(f: Tucker2Kernel | TTKernel) -> list[LayerShape]:
    if isinstance(f, Tucker2Kernel):
        d = f.core.shape[0]
        rp, rq = f.ranks
        return [
            LayerShape("pointwise_in", (1, 1, f.factor_p.shape[0], rp)),
            LayerShape("core", (d, d, rp, rq)),
            LayerShape("pointwise_out", (1, 1, rq, f.factor_q.shape[0])),
        ]
    return [LayerShape(f"core_{n + 1}", tuple(c.shape)) for n, c in enumerate(f.cores)]
