from __future__ import annotations

import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Final

COMPONENT_LOGS: Final = {
    "tensordenoise.decomp": "decomp.log",
    "tensordenoise.search": "search.log",
    "tensordenoise.io": "io.log",
}

_FORMAT: Final = (
    "%(asctime)s %(levelname)s [%(name)s] "
    "run=%(run_id)s trial=%(trial_id)s fold=%(fold)s "
    "%(message)s"
)


def _build_handler(path: Path) -> RotatingFileHandler:
    handler = RotatingFileHandler(path, maxBytes=5 * 1024 * 1024, backupCount=3)
    handler.setFormatter(logging.Formatter(fmt=_FORMAT, datefmt="%Y-%m-%dT%H:%M:%S"))
    handler.addFilter(ContextFilter())
    return handler


def _has_handler(logger: logging.Logger, path: Path) -> bool:
    target = os.path.abspath(path)
    return any(
        isinstance(h, RotatingFileHandler) and h.baseFilename == target
        for h in logger.handlers
    )


def configure_logging(level: str = "INFO", log_dir: str | Path = "./logs") -> None:
    level_val = getattr(logging, level.upper(), logging.INFO)
    logging.captureWarnings(True)
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    # Root logger
    root = logging.getLogger()
    root.setLevel(level_val)
    if not _has_handler(root, log_dir / "main.log"):
        root.addHandler(_build_handler(log_dir / "main.log"))
    if not any(getattr(h, "_tensordenoise_stderr", False) for h in root.handlers):
        stderr = logging.StreamHandler(sys.stderr)
        stderr.setLevel(logging.WARNING)
        stderr.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        stderr._tensordenoise_stderr = True  # type: ignore[attr-defined]
        root.addHandler(stderr)

    # Component loggers
    for name, filename in COMPONENT_LOGS.items():
        logger = logging.getLogger(name)
        logger.setLevel(level_val)
        if not _has_handler(logger, log_dir / filename):
            logger.addHandler(_build_handler(log_dir / filename))


class ContextFilter(logging.Filter):
    def __init__(
        self,
        run_id: str | None = None,
        trial_id: int | None = None,
        fold: int | None = None,
    ) -> None:
        super().__init__()
        self.run_id = run_id or "-"
        self.trial_id = "-" if trial_id is None else str(trial_id)
        self.fold = "-" if fold is None else str(fold)

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "run_id"):
            record.run_id = self.run_id
        if not hasattr(record, "trial_id"):
            record.trial_id = self.trial_id
        if not hasattr(record, "fold"):
            record.fold = self.fold
        return True


def attach_context(
    run_id: str | None,
    trial_id: int | None = None,
    fold: int | None = None,
) -> None:
    f = ContextFilter(run_id=run_id, trial_id=trial_id, fold=fold)
    for logger in (logging.getLogger(), *(logging.getLogger(n) for n in COMPONENT_LOGS)):
        for h in logger.handlers:
            if isinstance(h, RotatingFileHandler):
                # the newest context replaces the previous one
                for old in [x for x in h.filters if isinstance(x, ContextFilter)]:
                    h.removeFilter(old)
                h.addFilter(f)
