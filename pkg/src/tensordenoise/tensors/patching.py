from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..errors import ConfigError, CoverageError, ShapeError
from .core import DenseTensor, as_tensor, reshape


@dataclass(frozen=True)
class PatchConfig:
    kernel: int
    stride: int
    padding: int = 0
    dilation: int = 1

    def __post_init__(self) -> None:
        if self.kernel < 1 or self.stride < 1 or self.dilation < 1:
            raise ConfigError(
                f"kernel, stride and dilation must be >= 1 (got K={self.kernel}, "
                f"S={self.stride}, D={self.dilation})"
            )
        if self.padding < 0:
            raise ConfigError(f"padding must be >= 0, got {self.padding}")

    @property
    def extent(self) -> int:
        return self.dilation * (self.kernel - 1) + 1

    def grid_size(self, dim: int) -> int:
        return (dim + 2 * self.padding - self.extent) // self.stride + 1

    def validate_for(self, width: int, height: int) -> None:
        for name, dim in (("W", width), ("H", height)):
            if self.extent > dim + 2 * self.padding:
                raise ConfigError(
                    f"patch extent {self.extent} exceeds padded {name}="
                    f"{dim + 2 * self.padding}"
                )


@dataclass(frozen=True)
class PatchTensor:
    data: DenseTensor  # [grid_w, grid_h, C, K, K]
    config: PatchConfig
    source_shape: tuple[int, int, int]  # (C, W, H)

    def __post_init__(self) -> None:
        c, w, h = self.source_shape
        k = self.config.kernel
        expected = (self.config.grid_size(w), self.config.grid_size(h), c, k, k)
        if self.data.shape != expected:
            raise ShapeError(f"patch data {self.data.shape} does not match {expected}")

    @property
    def grid_w(self) -> int:
        return self.data.shape[0]

    @property
    def grid_h(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.source_shape[0]


@dataclass(frozen=True)
class CoverageMap:
    counts: NDArray[np.int64]  # [W, H]

    def uncovered(self) -> NDArray[np.int64]:
        """(w, h) coordinates of every pixel no patch reaches, row-major order."""
        return np.argwhere(self.counts == 0)

    def require_full(self) -> None:
        missing = self.uncovered()
        if missing.shape[0]:
            w, h = (int(v) for v in missing[0])
            raise CoverageError((w, h), int(missing.shape[0]))


def _window(cfg: PatchConfig, k: int, grid: int) -> slice:
    start = cfg.dilation * k
    return slice(start, start + cfg.stride * (grid - 1) + 1, cfg.stride)


def _image_dims(image: DenseTensor) -> tuple[int, int, int]:
    if image.ndim != 3:
        raise ShapeError(f"expected an image of shape [C, W, H], got {image.shape}")
    c, w, h = image.shape
    return c, w, h


def extract_patches(image: DenseTensor, cfg: PatchConfig) -> PatchTensor:
    image = as_tensor(image)
    c, w, h = _image_dims(image)
    cfg.validate_for(w, h)
    gw, gh = cfg.grid_size(w), cfg.grid_size(h)
    p = cfg.padding
    padded = np.pad(image, ((0, 0), (p, p), (p, p)), mode="constant")

    out = np.empty((gw, gh, c, cfg.kernel, cfg.kernel), dtype=np.float64)
    for k1 in range(cfg.kernel):
        rows = padded[:, _window(cfg, k1, gw), :]
        for k2 in range(cfg.kernel):
            block = rows[:, :, _window(cfg, k2, gh)]  # [C, gw, gh]
            out[:, :, :, k1, k2] = block.transpose(1, 2, 0)
    return PatchTensor(data=out, config=cfg, source_shape=(c, w, h))


def coverage_map(cfg: PatchConfig, channels: int, width: int, height: int) -> CoverageMap:
    """Number of patch entries landing on each pixel; identical for every
    channel, so `channels` only takes part in validation."""
    if channels < 1:
        raise ShapeError(f"channel count must be >= 1, got {channels}")
    cfg.validate_for(width, height)
    gw, gh = cfg.grid_size(width), cfg.grid_size(height)
    p = cfg.padding
    counts = np.zeros((width + 2 * p, height + 2 * p), dtype=np.int64)
    for k1 in range(cfg.kernel):
        for k2 in range(cfg.kernel):
            counts[_window(cfg, k1, gw), _window(cfg, k2, gh)] += 1
    return CoverageMap(counts=np.ascontiguousarray(counts[p : p + width, p : p + height]))


def merge_patches(patches: PatchTensor) -> DenseTensor:
    cfg = patches.config
    c, w, h = patches.source_shape
    coverage = coverage_map(cfg, c, w, h)
    coverage.require_full()

    gw, gh = patches.grid_w, patches.grid_h
    p = cfg.padding
    acc = np.zeros((c, w + 2 * p, h + 2 * p), dtype=np.float64)
    for k1 in range(cfg.kernel):
        for k2 in range(cfg.kernel):
            acc[:, _window(cfg, k1, gw), _window(cfg, k2, gh)] += patches.data[
                :, :, :, k1, k2
            ].transpose(2, 0, 1)
    return acc[:, p : p + w, p : p + h] / coverage.counts[None, :, :]


def contract_grid(patches: PatchTensor) -> DenseTensor:
    gw, gh, c, k, _ = patches.data.shape
    return reshape(patches.data, (gw * gh, c, k, k))


def expand_grid(contracted: DenseTensor, like: PatchTensor) -> PatchTensor:
    """Inverse of `contract_grid`, reusing the geometry of `like`."""
    return PatchTensor(
        data=reshape(contracted, like.data.shape),
        config=like.config,
        source_shape=like.source_shape,
    )
