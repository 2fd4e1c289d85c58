"""Run manifest for `search` and `evaluate`.

    {
      "space": {"patch_sizes": [4, 8, 16, 24], "strides": [1, 2, 4],
                "rank_step": 4, "rank_k_cap": 80, "method": "tucker"},
      "evaluator": {"kind": "surrogate", "tau": 30.0},
      "folds": [{"clean": "f0_clean.bin", "adversarial": "f0_adv.bin"}],
      "variant": "cifar10",
      "budget": 50,
      "seed": 0,
      "out_dir": "runs/a"
    }

`folds` may be replaced by `dataset: {clean, adversarial, variant?, n_folds,
limit?}`, which is split into folds with the manifest seed. Relative paths
resolve against the manifest's directory.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..defense.data import NUM_CLASSES, FoldData, load_fold, partition_folds
from ..defense.evaluator import Evaluator
from ..defense.space import SearchSpace
from ..errors import ConfigError, FormatError
from .env import Settings, load_settings

logger = logging.getLogger("tensordenoise.search")

_KEYS = {"space", "evaluator", "folds", "dataset", "variant", "budget", "seed", "out_dir"}


@dataclass(frozen=True)
class RunManifest:
    space: dict[str, Any]
    evaluator: Evaluator
    budget: int
    seed: int
    out_dir: Path
    base: Path
    variant: str = "cifar10"
    folds: tuple[dict[str, Any], ...] = ()
    dataset: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path, settings: Settings | None = None) -> RunManifest:
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"no such manifest: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
        return cls.from_dict(raw, base=path.parent, settings=settings)

    @classmethod
    def from_dict(
        cls,
        raw: Any,
        base: Path = Path("."),
        settings: Settings | None = None,
    ) -> RunManifest:
        settings = settings or load_settings()
        if not isinstance(raw, dict):
            raise ConfigError("manifest must be a JSON object")
        unknown = set(raw) - _KEYS
        if unknown:
            raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")
        for key in ("evaluator", "budget", "seed", "out_dir"):
            if key not in raw:
                raise ConfigError(f"manifest is missing {key!r}")
        if ("folds" in raw) == ("dataset" in raw):
            raise ConfigError("manifest needs exactly one of 'folds' and 'dataset'")

        budget, seed = raw["budget"], raw["seed"]
        if not isinstance(budget, int) or isinstance(budget, bool) or budget < 1:
            raise ConfigError(f"budget must be an integer >= 1, got {budget!r}")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

        space = dict(raw.get("space", {}))
        space.setdefault("rank_step", settings.rank_step)
        space.setdefault("rank_k_cap", settings.rank_k_cap)
        # validate everything but the image-dependent feasibility now
        SearchSpace.from_dict(space, image_shape=(1, 1, 1))

        folds = raw.get("folds", [])
        if "folds" in raw and (not isinstance(folds, list) or not folds):
            raise ConfigError("'folds' must be a non-empty list")
        for n, spec in enumerate(folds):
            if not isinstance(spec, dict) or not {"clean", "adversarial"} <= set(spec):
                raise ConfigError(f"fold {n} needs 'clean' and 'adversarial'")
        dataset = raw.get("dataset", {})
        if "dataset" in raw and (
            not isinstance(dataset, dict) or not {"clean", "adversarial"} <= set(dataset)
        ):
            raise ConfigError("'dataset' needs 'clean' and 'adversarial'")

        variant = str(raw.get("variant", dataset.get("variant", "cifar10")))
        if variant not in NUM_CLASSES:
            raise ConfigError(f"unknown dataset variant {variant!r}")

        evaluator = Evaluator.from_dict(
            raw["evaluator"],
            scratch_dir=settings.scratch_dir,
            timeout_s=settings.evaluator_timeout_s,
        )
        out_dir = Path(raw["out_dir"])
        return cls(
            space=space,
            evaluator=evaluator,
            budget=budget,
            seed=seed,
            out_dir=out_dir if out_dir.is_absolute() else base / out_dir,
            base=base,
            variant=variant,
            folds=tuple(folds),
            dataset=dict(dataset),
        )

    def load_folds(self) -> list[FoldData]:
        if self.folds:
            return [
                load_fold(spec, self.variant, name=f"fold{n}", base=self.base)
                for n, spec in enumerate(self.folds)
            ]
        whole = load_fold(self.dataset, self.variant, name="dataset", base=self.base)
        clean, adv = whole.clean, whole.adversarial
        limit = self.dataset.get("limit")
        if limit is not None:
            idx = np.arange(min(int(limit), len(clean)))
            clean, adv = clean.subset(idx), adv.subset(idx)
        logger.info("partitioning %d images from %s", len(clean), self.dataset["clean"])
        return partition_folds(clean, adv, int(self.dataset.get("n_folds", 8)), seed=self.seed)

    def search_space(self, folds: list[FoldData]) -> SearchSpace:
        shapes = {f.clean.image_shape for f in folds}
        if len(shapes) != 1:
            raise ConfigError(f"folds hold images of different shapes: {sorted(shapes)}")
        return SearchSpace.from_dict(self.space, image_shape=shapes.pop())
