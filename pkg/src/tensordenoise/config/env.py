from __future__ import annotations

import os
from dataclasses import dataclass

from ..errors import ConfigError


def _maybe_load_dotenv() -> None:
    try:
        from dotenv import load_dotenv

        load_dotenv()
    except Exception:
        # dotenv is optional; proceed silently if unavailable
        pass


_maybe_load_dotenv()


@dataclass(frozen=True)
class Settings:
    log_level: str
    log_dir: str
    scratch_dir: str
    rank_step: int
    rank_k_cap: int
    hooi_max_iters: int
    hooi_tol: float
    evaluator_timeout_s: float


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from e


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError as e:
        raise ConfigError(f"{name} must be a number, got {raw!r}") from e


def load_settings() -> Settings:
    return Settings(
        log_level=os.getenv("TENSORDENOISE_LOG_LEVEL", "INFO"),
        log_dir=os.getenv("TENSORDENOISE_LOG_DIR", "./logs"),
        scratch_dir=os.getenv("TENSORDENOISE_SCRATCH_DIR", "./data/scratch"),
        rank_step=_env_int("TENSORDENOISE_RANK_STEP", 4),
        rank_k_cap=_env_int("TENSORDENOISE_RANK_K_CAP", 80),
        hooi_max_iters=_env_int("TENSORDENOISE_HOOI_MAX_ITERS", 25),
        hooi_tol=_env_float("TENSORDENOISE_HOOI_TOL", 1e-6),
        evaluator_timeout_s=_env_float("TENSORDENOISE_EVALUATOR_TIMEOUT", 600.0),
    )
