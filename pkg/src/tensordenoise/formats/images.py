from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import FormatError, ShapeError
from ..tensors.core import DenseTensor, as_tensor
from .container import read_tensor, write_tensor

logger = logging.getLogger("tensordenoise.io")

_MODES = {"L": 1, "RGB": 3}


def read_png(path: str | Path) -> DenseTensor:
    """8-bit grayscale or RGB PNG -> [C, W, H] in [0, 1]; W indexes rows."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such image file: {path}")
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise FormatError(f"{path}: not a PNG file ({img.format})")
            if img.mode not in _MODES:
                raise FormatError(f"{path}: unsupported PNG mode/bit depth {img.mode!r}")
            pixels = np.asarray(img, dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise FormatError(f"{path}: unreadable image: {e}") from e
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    return np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=np.float64) / 255.0


def quantize(t: DenseTensor) -> np.ndarray:
    """[0, 1] floats -> uint8 with round-half-up."""
    return np.floor(np.clip(t, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(path: str | Path, t: DenseTensor) -> None:
    t = as_tensor(t)
    if t.ndim != 3 or t.shape[0] not in (1, 3):
        raise ShapeError(f"PNG output needs [1|3, W, H], got {t.shape}")
    pixels = quantize(t).transpose(1, 2, 0)
    if pixels.shape[2] == 1:
        img = Image.fromarray(np.ascontiguousarray(pixels[:, :, 0]))
    else:
        img = Image.fromarray(np.ascontiguousarray(pixels))
    img.save(Path(path), format="PNG")
    logger.debug("wrote %s %s", path, t.shape)


def load_image(path: str | Path) -> DenseTensor:
    path = Path(path)
    if path.suffix.lower() == ".png":
        return read_png(path)
    return read_tensor(path)


def save_image(path: str | Path, t: DenseTensor) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        write_png(path, t)
    else:
        write_tensor(path, t)
