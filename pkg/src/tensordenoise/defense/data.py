from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..errors import ArgumentError, ConfigError, FormatError
from ..tensors.core import DenseTensor

logger = logging.getLogger("tensordenoise.search")

NUM_CLASSES = {"cifar10": 10, "cifar100": 100}


@dataclass(frozen=True)
class LabeledBatch:
    images: DenseTensor  # [B, C, W, H] in [0, 1]
    labels: NDArray[np.int64]  # [B]
    num_classes: int

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise ArgumentError(f"batch images must be [B, C, W, H], got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ArgumentError(
                f"{self.labels.shape[0] if self.labels.ndim else 0} labels for "
                f"{self.images.shape[0]} images"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ArgumentError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        _, c, w, h = self.images.shape
        return c, w, h

    def subset(self, index: NDArray[np.int64]) -> LabeledBatch:
        return LabeledBatch(
            images=np.ascontiguousarray(self.images[index]),
            labels=np.ascontiguousarray(self.labels[index]),
            num_classes=self.num_classes,
        )


@dataclass(frozen=True)
class FoldData:
    clean: LabeledBatch
    adversarial: LabeledBatch
    name: str = "fold"

    def __post_init__(self) -> None:
        check_aligned(self.clean, self.adversarial)


def check_aligned(clean: LabeledBatch, adversarial: LabeledBatch) -> None:
    if clean.images.shape != adversarial.images.shape:
        raise ArgumentError(
            f"clean {clean.images.shape} and adversarial {adversarial.images.shape} batches differ"
        )
    if not np.array_equal(clean.labels, adversarial.labels):
        raise ArgumentError("clean and adversarial batches are not label-aligned")


def partition_folds(
    clean: LabeledBatch,
    adversarial: LabeledBatch,
    n_folds: int = 8,
    seed: int = 0,
) -> list[FoldData]:
    """Split index-aligned batches into `n_folds` disjoint validation folds."""
    check_aligned(clean, adversarial)
    if not 1 <= n_folds <= len(clean):
        raise ConfigError(f"n_folds must be in [1, {len(clean)}], got {n_folds}")
    order = np.random.default_rng(seed).permutation(len(clean))
    folds = []
    for n, part in enumerate(np.array_split(order, n_folds)):
        idx = np.sort(part)
        folds.append(FoldData(clean.subset(idx), adversarial.subset(idx), name=f"fold{n}"))
    logger.info("partitioned %d images into %d folds", len(clean), n_folds)
    return folds


def _load_batch(path: Path, variant: str) -> LabeledBatch:
    from ..formats.cifar import load_cifar
    from ..formats.container import read_tensor

    if path.suffix.lower() == ".bin":
        return load_cifar(path, variant)
    images = read_tensor(path)
    labels_path = path.with_name(f"{path.stem}.labels.tnsr")
    labels = read_tensor(labels_path).reshape(-1)
    if not np.all(labels == np.round(labels)):
        raise FormatError(f"{labels_path}: labels must be integers")
    return LabeledBatch(
        images=images,
        labels=labels.astype(np.int64),
        num_classes=NUM_CLASSES[variant],
    )


def load_fold(
    spec: Mapping[str, Any],
    variant: str = "cifar10",
    name: str = "fold",
    base: Path | None = None,
) -> FoldData:
    if variant not in NUM_CLASSES:
        raise ConfigError(f"unknown dataset variant {variant!r}")
    try:
        clean_path, adv_path = Path(spec["clean"]), Path(spec["adversarial"])
    except KeyError as e:
        raise ConfigError(f"fold {name} is missing {e.args[0]!r}") from e
    if base is not None:
        clean_path, adv_path = base / clean_path, base / adv_path
    return FoldData(_load_batch(clean_path, variant), _load_batch(adv_path, variant), name=name)
