from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

from ..errors import FormatError
from .denoiser import DenoiserConfig

logger = logging.getLogger("tensordenoise.search")

Status = Literal["pending", "complete", "failed"]


@dataclass(frozen=True)
class FoldScore:
    clean: float
    adv: float

    def to_dict(self) -> dict[str, float]:
        return {"clean": self.clean, "adv": self.adv}


def fitness(scores: Sequence[FoldScore]) -> float:
    """Mean over folds of the per-fold (clean + adversarial) / 2."""
    if not scores:
        raise ValueError("fitness needs at least one fold")
    return sum((s.clean + s.adv) / 2.0 for s in scores) / len(scores)


@dataclass(frozen=True)
class Trial:
    trial_id: int
    config: DenoiserConfig
    folds: tuple[FoldScore, ...] = ()
    fitness: float | None = None
    status: Status = "pending"
    error: str | None = None

    @classmethod
    def complete(cls, trial_id: int, config: DenoiserConfig, folds: Sequence[FoldScore]) -> Trial:
        return cls(trial_id, config, tuple(folds), fitness(folds), "complete")

    def failed(self, cause: str) -> Trial:
        return replace(self, fitness=None, status="failed", error=cause)

    @property
    def mean_clean(self) -> float:
        return sum(s.clean for s in self.folds) / len(self.folds) if self.folds else math.nan

    @property
    def mean_adv(self) -> float:
        return sum(s.adv for s in self.folds) / len(self.folds) if self.folds else math.nan

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "trial_id": self.trial_id,
            "config": self.config.to_dict(),
            "folds": [s.to_dict() for s in self.folds],
            "fitness": self.fitness,
            "status": self.status,
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_json(cls, raw: dict[str, Any]) -> Trial:
        try:
            return cls(
                trial_id=int(raw["trial_id"]),
                config=DenoiserConfig.from_dict(raw["config"]),
                folds=tuple(FoldScore(float(f["clean"]), float(f["adv"])) for f in raw["folds"]),
                fitness=None if raw["fitness"] is None else float(raw["fitness"]),
                status=raw["status"],
                error=raw.get("error"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"malformed trial record: {e}") from e


def ranked(trials: Sequence[Trial]) -> list[Trial]:
    """Fitness descending, ties by lower trial_id; trials without fitness last."""
    return sorted(
        trials,
        key=lambda t: (t.fitness is None, -(t.fitness or 0.0), t.trial_id),
    )


@dataclass
class TrialLog:
    """Append-only JSONL record of a search, one trial per line."""

    path: Path
    trials: list[Trial] = field(default_factory=list)

    @classmethod
    def open(cls, path: str | Path) -> TrialLog:
        path = Path(path)
        log = cls(path)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            return log
        lines = path.read_text(encoding="utf-8").splitlines()
        kept: list[str] = []
        for n, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                trial = Trial.from_json(json.loads(line))
            except (ValueError, FormatError) as e:
                if n == len(lines) - 1:
                    # a crash can leave the last record half-written
                    logger.warning("dropping truncated last record of %s", path)
                    break
                raise FormatError(f"{path}: line {n + 1}: {e}") from e
            if trial.trial_id != len(log.trials):
                raise FormatError(
                    f"{path}: line {n + 1}: expected trial {len(log.trials)}, got {trial.trial_id}"
                )
            log.trials.append(trial)
            kept.append(line)
        if len(kept) != sum(1 for ln in lines if ln.strip()):
            path.write_text("".join(f"{ln}\n" for ln in kept), encoding="utf-8")
        logger.info("resuming from %s with %d trials", path, len(log.trials))
        return log

    def append(self, trial: Trial) -> None:
        if trial.trial_id != len(self.trials):
            raise ValueError(f"trial {trial.trial_id} appended out of order")
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(trial.to_json()) + "\n")
            fh.flush()
        self.trials.append(trial)
