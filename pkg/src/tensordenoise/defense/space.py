"""The denoiser hyperparameter space.

Patch size and stride are ordered categoricals; the rank axes are built per
drawn (K, S) in multiples of `rank_step`: rank_p up to K, rank_k up to the
patch count capped at `rank_k_cap`. A (K, S) pair is feasible when its
patches fit the image and cover every pixel.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property
from typing import Any

from ..errors import ConfigError
from ..tensors.patching import PatchConfig, coverage_map
from .denoiser import METHODS, DenoiserConfig, Method

logger = logging.getLogger("tensordenoise.search")

DEFAULT_PATCH_SIZES = (4, 8, 16, 24)
DEFAULT_STRIDES = (1, 2, 4)


@dataclass(frozen=True)
class SearchSpace:
    image_shape: tuple[int, int, int]  # (C, W, H)
    patch_sizes: tuple[int, ...] = DEFAULT_PATCH_SIZES
    strides: tuple[int, ...] = DEFAULT_STRIDES
    rank_step: int = 4
    rank_k_cap: int = 80
    methods: tuple[Method, ...] = ("tucker",)

    def __post_init__(self) -> None:
        if len(self.image_shape) != 3 or min(self.image_shape) < 1:
            raise ConfigError(f"image shape must be (C, W, H), got {self.image_shape}")
        if not self.patch_sizes or not self.strides or not self.methods:
            raise ConfigError("patch_sizes, strides and methods must be non-empty")
        if min(self.patch_sizes) < 1 or min(self.strides) < 1:
            raise ConfigError("patch sizes and strides must be positive")
        if len(set(self.patch_sizes)) != len(self.patch_sizes) or len(set(self.strides)) != len(
            self.strides
        ):
            raise ConfigError("patch sizes and strides must not repeat")
        if self.rank_step < 1 or self.rank_k_cap < 1:
            raise ConfigError(
                f"rank_step and rank_k_cap must be >= 1, got {self.rank_step}, {self.rank_k_cap}"
            )
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], image_shape: tuple[int, int, int]) -> SearchSpace:
        methods = raw.get("method", "tucker")
        if isinstance(methods, str):
            methods = [methods]
        try:
            return cls(
                image_shape=image_shape,
                patch_sizes=tuple(int(k) for k in raw.get("patch_sizes", DEFAULT_PATCH_SIZES)),
                strides=tuple(int(s) for s in raw.get("strides", DEFAULT_STRIDES)),
                rank_step=int(raw.get("rank_step", 4)),
                rank_k_cap=int(raw.get("rank_k_cap", 80)),
                methods=tuple(methods),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed search space: {e}") from e

    def to_dict(self) -> dict[str, Any]:
        return {
            "patch_sizes": list(self.patch_sizes),
            "strides": list(self.strides),
            "rank_step": self.rank_step,
            "rank_k_cap": self.rank_k_cap,
            "method": list(self.methods),
        }

    def patch_count(self, kernel: int, stride: int) -> int:
        cfg = PatchConfig(kernel, stride)
        _, w, h = self.image_shape
        return cfg.grid_size(w) * cfg.grid_size(h)

    def rank_p_choices(self, kernel: int) -> tuple[int, ...]:
        return tuple(range(self.rank_step, kernel + 1, self.rank_step))

    def rank_k_choices(self, kernel: int, stride: int) -> tuple[int, ...]:
        top = min(self.patch_count(kernel, stride), self.rank_k_cap)
        return tuple(range(self.rank_step, top + 1, self.rank_step))

    def _pair_ok(self, kernel: int, stride: int) -> bool:
        c, w, h = self.image_shape
        cfg = PatchConfig(kernel, stride)
        try:
            cfg.validate_for(w, h)
        except ConfigError:
            return False
        if coverage_map(cfg, c, w, h).uncovered().size:
            return False
        return bool(self.rank_p_choices(kernel) and self.rank_k_choices(kernel, stride))

    @cached_property
    def feasible_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            (k, s) for k in self.patch_sizes for s in self.strides if self._pair_ok(k, s)
        )

    @cached_property
    def configs(self) -> tuple[DenoiserConfig, ...]:
        out = [
            DenoiserConfig.of(k, s, m, rk, rp)
            for k, s in self.feasible_pairs
            for m in self.methods
            for rk in self.rank_k_choices(k, s)
            for rp in self.rank_p_choices(k)
        ]
        if not out:
            raise ConfigError(
                f"no feasible configuration for image {self.image_shape} "
                f"(patch sizes {self.patch_sizes}, strides {self.strides})"
            )
        logger.debug("search space holds %d configurations", len(out))
        return tuple(out)

    def contains(self, cfg: DenoiserConfig) -> bool:
        k, s = cfg.patch.kernel, cfg.patch.stride
        return (
            (k, s) in self.feasible_pairs
            and cfg.patch.padding == 0
            and cfg.patch.dilation == 1
            and cfg.method in self.methods
            and cfg.rank_k in self.rank_k_choices(k, s)
            and cfg.rank_p in self.rank_p_choices(k)
        )
