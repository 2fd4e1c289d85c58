from __future__ import annotations

import logging
from collections.abc import Iterator
from logging.handlers import RotatingFileHandler

import numpy as np
import pytest


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _reset_logging() -> Iterator[None]:
    """Drop the handlers `configure_logging` installs so each CLI test starts clean."""
    yield
    names = ["", "tensordenoise.decomp", "tensordenoise.search", "tensordenoise.io"]
    for name in names:
        logger = logging.getLogger(name)
        for h in list(logger.handlers):
            if isinstance(h, RotatingFileHandler) or getattr(h, "_tensordenoise_stderr", False):
                logger.removeHandler(h)
                h.close()


def low_rank_tucker(
    rng: np.random.Generator, shape: tuple[int, ...], ranks: tuple[int, ...]
) -> np.ndarray:
    """Random tensor of exact multilinear rank `ranks`."""
    out = rng.standard_normal(ranks)
    for n, (dim, r) in enumerate(zip(shape, ranks)):
        a = rng.standard_normal((dim, r))
        out = np.moveaxis(np.tensordot(a, out, axes=(1, n)), 0, n)
    return out


def low_rank_image(seed: int) -> np.ndarray:
    """3x32x32 image whose non-overlapping 8x8 patch tensor [16, 3, 8, 8] has
    multilinear rank (2, 3, 2, 2), with every pixel inside [0.08, 0.92]."""
    from tensordenoise.tensors.patching import PatchConfig, PatchTensor, merge_patches

    g = np.random.default_rng(seed)

    def factor(n: int) -> np.ndarray:
        return np.column_stack([np.ones(n), g.uniform(-1.0, 1.0, n)])

    core = g.uniform(-0.06, 0.06, size=(2, 3, 2, 2))
    core[0, :, 0, 0] = 0.5
    x = np.einsum("icjk,ni,pj,qk->ncpq", core, factor(16), factor(8), factor(8))
    patches = PatchTensor(x.reshape(4, 4, 3, 8, 8), PatchConfig(8, 8), (3, 32, 32))
    return merge_patches(patches)
