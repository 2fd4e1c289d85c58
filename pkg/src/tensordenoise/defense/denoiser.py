"""Tucker runs on [N, C, K, K] patch stacks, TT on the permuted [N, K, K, C]."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray

from ..errors import ConfigError, ShapeError
from ..tensors.core import DenseTensor, as_tensor, permute_axes, require_finite
from ..tensors.decomposition import (
    DEFAULT_HOOI_MAX_ITERS,
    DEFAULT_HOOI_TOL,
    DecompositionReport,
    tt_reconstruct,
    tt_svd,
    tucker_hooi,
    tucker_hosvd_report,
    tucker_reconstruct,
)
from ..tensors.patching import (
    PatchConfig,
    PatchTensor,
    contract_grid,
    coverage_map,
    expand_grid,
    extract_patches,
    merge_patches,
)

logger = logging.getLogger("tensordenoise.decomp")

Method = Literal["tucker", "tt"]
METHODS: tuple[Method, ...] = ("tucker", "tt")

# [N, C, K, K] <-> [N, K, K, C]
_TT_ORDER = (0, 2, 3, 1)
_TT_INVERSE = (0, 3, 1, 2)


@dataclass(frozen=True)
class DenoiserConfig:
    patch: PatchConfig
    method: Method
    rank_k: int
    rank_p: int

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.rank_k < 1 or self.rank_p < 1:
            raise ConfigError(f"ranks must be >= 1, got rank_k={self.rank_k}, rank_p={self.rank_p}")

    @classmethod
    def of(
        cls,
        patch: int,
        stride: int,
        method: Method,
        rank_k: int,
        rank_p: int,
        padding: int = 0,
        dilation: int = 1,
    ) -> DenoiserConfig:
        return cls(PatchConfig(patch, stride, padding, dilation), method, rank_k, rank_p)

    def ranks_for(self, channels: int) -> list[int]:
        if self.method == "tucker":
            return [self.rank_k, channels, self.rank_p, self.rank_p]
        return [1, self.rank_k, self.rank_p, channels, 1]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "patch": self.patch.kernel,
            "stride": self.patch.stride,
            "method": self.method,
            "rank_k": self.rank_k,
            "rank_p": self.rank_p,
        }
        if self.patch.padding:
            out["pad"] = self.patch.padding
        if self.patch.dilation != 1:
            out["dilation"] = self.patch.dilation
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> DenoiserConfig:
        try:
            return cls.of(
                int(raw["patch"]),
                int(raw["stride"]),
                raw["method"],
                int(raw["rank_k"]),
                int(raw["rank_p"]),
                padding=int(raw.get("pad", 0)),
                dilation=int(raw.get("dilation", 1)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed denoiser config {raw!r}: {e}") from e


def _approximate(
    x: DenseTensor,
    cfg: DenoiserConfig,
    hosvd_only: bool,
    max_iters: int,
    tol: float,
) -> tuple[DenseTensor, DecompositionReport]:
    channels = x.shape[1]
    ranks = cfg.ranks_for(channels)
    if cfg.method == "tucker":
        if hosvd_only:
            f, report = tucker_hosvd_report(x, ranks)
        else:
            f, report = tucker_hooi(x, ranks, max_iters=max_iters, tol=tol)
        return tucker_reconstruct(f), report
    y = permute_axes(x, _TT_ORDER)
    f, report = tt_svd(y, ranks[1:-1])
    return permute_axes(tt_reconstruct(f), _TT_INVERSE), report


def _patch_tensor(image: DenseTensor, cfg: DenoiserConfig) -> PatchTensor:
    image = as_tensor(image)
    if image.ndim != 3:
        raise ShapeError(f"expected an image of shape [C, W, H], got {image.shape}")
    require_finite(image, "image")
    c, w, h = image.shape
    coverage_map(cfg.patch, c, w, h).require_full()
    return extract_patches(image, cfg.patch)


def denoise(
    image: DenseTensor,
    cfg: DenoiserConfig,
    *,
    hosvd_only: bool = False,
    max_iters: int = DEFAULT_HOOI_MAX_ITERS,
    tol: float = DEFAULT_HOOI_TOL,
) -> tuple[DenseTensor, DecompositionReport]:
    patches = _patch_tensor(image, cfg)
    approx, report = _approximate(contract_grid(patches), cfg, hosvd_only, max_iters, tol)
    merged = merge_patches(expand_grid(approx, patches))
    logger.debug("denoised %s with %s: %s", patches.source_shape, cfg.to_dict(), report.to_dict())
    return np.clip(merged, 0.0, 1.0), report


def patch_domain_error(
    image: DenseTensor,
    cfg: DenoiserConfig,
    *,
    hosvd_only: bool = True,
    max_iters: int = DEFAULT_HOOI_MAX_ITERS,
    tol: float = DEFAULT_HOOI_TOL,
) -> DecompositionReport:
    patches = _patch_tensor(image, cfg)
    return _approximate(contract_grid(patches), cfg, hosvd_only, max_iters, tol)[1]


def denoise_batch(
    images: DenseTensor,
    cfg: DenoiserConfig,
    *,
    workers: int = 1,
    hosvd_only: bool = False,
    max_iters: int = DEFAULT_HOOI_MAX_ITERS,
    tol: float = DEFAULT_HOOI_TOL,
) -> DenseTensor:
    if images.ndim != 4:
        raise ShapeError(f"expected a batch [B, C, W, H], got {images.shape}")

    def one(img: DenseTensor) -> DenseTensor:
        return denoise(img, cfg, hosvd_only=hosvd_only, max_iters=max_iters, tol=tol)[0]

    if workers <= 1:
        return np.stack([one(img) for img in images])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.stack(list(pool.map(one, images)))


# --- synthetic bounded perturbations -------------------------------------

_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def splitmix64(seed: int, n: int) -> NDArray[np.uint64]:
    steps = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + steps * _GOLDEN_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def uniform_doubles(seed: int, n: int) -> NDArray[np.float64]:
    """Doubles in [0, 1) from the top 53 bits of each splitmix64 output."""
    return (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class PerturbationSpec:
    norm: Literal["l_inf", "l2"]
    epsilon: float
    seed: int

    def __post_init__(self) -> None:
        if self.norm not in ("l_inf", "l2"):
            raise ConfigError(f"norm must be l_inf or l2, got {self.norm!r}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not 0 <= self.seed <= _MASK64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def perturbation(shape: tuple[int, ...], spec: PerturbationSpec) -> DenseTensor:
    n = math.prod(shape)
    if spec.norm == "l_inf":
        u = uniform_doubles(spec.seed, n)
        return (spec.epsilon * np.where(u < 0.5, -1.0, 1.0)).reshape(shape)
    # Box-Muller gives an isotropic direction
    u = uniform_doubles(spec.seed, 2 * n)
    g = np.sqrt(-2.0 * np.log1p(-u[:n])) * np.cos(2.0 * np.pi * u[n:])
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        g, norm = np.ones(n), math.sqrt(n)
    return (g * (spec.epsilon / norm)).reshape(shape)


def perturb(image: DenseTensor, spec: PerturbationSpec) -> DenseTensor:
    image = as_tensor(image)
    return np.clip(image + perturbation(image.shape, spec), 0.0, 1.0)


@dataclass(frozen=True)
class FidelityReport:
    psnr_db: float  # +inf for identical inputs
    linf_distance: float
    l2_distance: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "psnr_db": self.psnr_db if math.isfinite(self.psnr_db) else "inf",
            "linf_distance": self.linf_distance,
            "l2_distance": self.l2_distance,
        }


def fidelity(reference: DenseTensor, candidate: DenseTensor) -> FidelityReport:
    reference, candidate = as_tensor(reference), as_tensor(candidate)
    if reference.shape != candidate.shape:
        raise ShapeError(f"shapes differ: {reference.shape} vs {candidate.shape}")
    diff = candidate - reference
    sq = float(np.sum(np.square(diff)))
    mse = sq / diff.size
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    return FidelityReport(
        psnr_db=psnr,
        linf_distance=float(np.max(np.abs(diff))),
        l2_distance=math.sqrt(sq),
    )
