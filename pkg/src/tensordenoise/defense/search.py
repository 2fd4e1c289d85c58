"""Cross-validated hyperparameter search for the denoiser."""

from __future__ import annotations

import json
import logging
import statistics
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..errors import ConfigError, TensorDenoiseError
from .data import FoldData
from .denoiser import DenoiserConfig
from .evaluator import FoldScorer
from .space import SearchSpace
from .tpe import TPEState, suggest
from .trials import FoldScore, Trial, TrialLog, ranked

logger = logging.getLogger("tensordenoise.search")

LOG_NAME = "trials.jsonl"
REPORT_NAME = "top10.json"


def evaluate_trial(
    config: DenoiserConfig,
    evaluator: FoldScorer,
    folds: Sequence[FoldData],
    trial_id: int = 0,
) -> Trial:
    """Score `config` on every fold; evaluator failures give a failed trial."""
    if not folds:
        raise ConfigError("at least one fold is required")
    ctx = {"trial_id": trial_id}
    scores: list[FoldScore] = []
    try:
        for fold in folds:
            clean, adv = evaluator.evaluate_fold(fold, config)
            if not (0.0 <= clean <= 1.0 and 0.0 <= adv <= 1.0):
                raise ValueError(f"accuracies ({clean}, {adv}) outside [0, 1]")
            scores.append(FoldScore(float(clean), float(adv)))
            logger.debug(
                "fold %s: clean=%.4f adv=%.4f",
                fold.name,
                clean,
                adv,
                extra={**ctx, "fold": fold.name},
            )
    except (TensorDenoiseError, OSError, ValueError) as e:
        logger.warning("trial %d %s failed: %s", trial_id, config.to_dict(), e, extra=ctx)
        return Trial(trial_id, config).failed(f"{type(e).__name__}: {e}")
    trial = Trial.complete(trial_id, config, scores)
    logger.info("trial %d %s fitness=%.5f", trial_id, config.to_dict(), trial.fitness, extra=ctx)
    return trial


def run_search(
    space: SearchSpace,
    evaluator: FoldScorer,
    folds: Sequence[FoldData],
    budget: int,
    seed: int,
    *,
    out_dir: str | Path | None = None,
    parallel: int = 1,
    gamma: float = 0.25,
    n_startup: int = 10,
    candidate_draws: int = 24,
) -> list[Trial]:
    """Trials already logged in `out_dir/trials.jsonl` count toward `budget`."""
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    if parallel < 1:
        raise ConfigError(f"parallel must be >= 1, got {parallel}")
    if not folds:
        raise ConfigError("at least one fold is required")
    logger.info(
        "searching %d configurations, budget %d, seed %d", len(space.configs), budget, seed
    )

    log = TrialLog.open(Path(out_dir) / LOG_NAME) if out_dir is not None else None
    history = list(log.trials) if log is not None else []
    if len(history) > budget:
        logger.warning("log already holds %d trials, more than the budget %d", len(history), budget)
    state = TPEState(
        seed=seed,
        gamma=gamma,
        n_startup=n_startup,
        candidate_draws=candidate_draws,
        history=history,
    )

    with ThreadPoolExecutor(max_workers=parallel) as pool:
        while len(state.history) < budget:
            wave: list[Trial] = []
            for _ in range(min(parallel, budget - len(state.history))):
                pending = Trial(len(state.history), suggest(state, space))
                state.history.append(pending)
                wave.append(pending)
            done = list(
                pool.map(lambda t: evaluate_trial(t.config, evaluator, folds, t.trial_id), wave)
            )
            del state.history[-len(wave):]
            for trial in done:
                state.history.append(trial)
                if log is not None:
                    log.append(trial)
    return ranked(state.history)


@dataclass(frozen=True)
class ReportRow:
    rank: int
    trial_id: int
    config: DenoiserConfig
    clean: float
    adv: float
    fitness: float
    clean_std: float
    adv_std: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "rank": self.rank,
            "trial_id": self.trial_id,
            "config": self.config.to_dict(),
            "clean": self.clean,
            "adv": self.adv,
            "fitness": self.fitness,
            "clean_std": self.clean_std,
            "adv_std": self.adv_std,
        }


def summarize(trials: Sequence[Trial], top: int = 10) -> list[ReportRow]:
    """Best completed trials with mean accuracies and their across-fold spread."""
    rows: list[ReportRow] = []
    for t in ranked([t for t in trials if t.status == "complete"])[:top]:
        assert t.fitness is not None
        clean = [s.clean for s in t.folds]
        adv = [s.adv for s in t.folds]
        rows.append(
            ReportRow(
                rank=len(rows) + 1,
                trial_id=t.trial_id,
                config=t.config,
                clean=t.mean_clean,
                adv=t.mean_adv,
                fitness=t.fitness,
                clean_std=statistics.pstdev(clean),
                adv_std=statistics.pstdev(adv),
            )
        )
    return rows


def write_report(out_dir: str | Path, trials: Sequence[Trial], top: int = 10) -> Path:
    path = Path(out_dir) / REPORT_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [r.to_dict() for r in summarize(trials, top)]
    failed = sum(1 for t in trials if t.status == "failed")
    payload = {"trials": len(trials), "failed": failed, "top": rows}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote report of %d rows to %s", len(rows), path)
    return path
