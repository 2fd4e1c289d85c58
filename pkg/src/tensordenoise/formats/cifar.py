"""CIFAR-10 / CIFAR-100 binary batches.

cifar10 record:  1 label byte + 3072 pixel bytes
cifar100 record: coarse label byte + fine label byte + 3072 pixel bytes
Pixels are stored as R, G and B planes of 32x32, row-major.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Final, Literal

import numpy as np

from ..defense.data import NUM_CLASSES, LabeledBatch
from ..errors import FormatError

logger = logging.getLogger("tensordenoise.io")

PIXELS: Final = 3 * 32 * 32
LABEL_BYTES: Final = {"cifar10": 1, "cifar100": 2}


def load_cifar(
    path: str | Path, variant: Literal["cifar10", "cifar100"] = "cifar10"
) -> LabeledBatch:
    path = Path(path)
    if variant not in LABEL_BYTES:
        raise FormatError(f"unknown CIFAR variant {variant!r}")
    if not path.is_file():
        raise FormatError(f"no such CIFAR file: {path}")
    raw = path.read_bytes()
    label_bytes = LABEL_BYTES[variant]
    record = label_bytes + PIXELS
    if not raw:
        raise FormatError(f"{path}: empty file", offset=0)
    if len(raw) % record:
        whole = len(raw) // record
        raise FormatError(f"{path}: truncated record {whole}", offset=whole * record)

    rows = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    # the fine label is the last label byte in both layouts
    labels = rows[:, label_bytes - 1].astype(np.int64)
    bad = np.flatnonzero(labels >= NUM_CLASSES[variant])
    if bad.size:
        raise FormatError(
            f"{path}: label {labels[bad[0]]} out of range for {variant}",
            offset=int(bad[0]) * record + label_bytes - 1,
        )
    images = rows[:, label_bytes:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    logger.info("loaded %d %s records from %s", rows.shape[0], variant, path)
    return LabeledBatch(images=images, labels=labels, num_classes=NUM_CLASSES[variant])
