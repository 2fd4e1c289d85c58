"""Accuracy evaluation of a denoiser configuration.

The surrogate evaluator counts an image as correct when its denoised
version is within `tau` dB PSNR of the clean reference; it is a proxy that
exercises the pipeline without any classifier. The external evaluator hands
denoised batches to a classifier process through TNSR files and reads
`{"accuracy": ...}` back from its standard output.
"""

from __future__ import annotations

import json
import logging
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Protocol

import numpy as np

from ..errors import ConfigError, EvaluatorError
from ..formats.container import write_tensor
from ..tensors.core import DenseTensor
from .data import FoldData, LabeledBatch, check_aligned
from .denoiser import DenoiserConfig, denoise_batch, fidelity

logger = logging.getLogger("tensordenoise.search")

DEFAULT_TIMEOUT_S = 600.0


class FoldScorer(Protocol):
    def evaluate_fold(self, fold: FoldData, cfg: DenoiserConfig) -> tuple[float, float]: ...


@dataclass(frozen=True)
class Evaluator:
    kind: Literal["surrogate", "external"]
    command: tuple[str, ...] | None = None
    workdir: str | None = None
    tau: float | None = None
    scratch_dir: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S
    workers: int = 1

    def __post_init__(self) -> None:
        if self.kind == "surrogate":
            if self.tau is None or self.command is not None:
                raise ConfigError("a surrogate evaluator takes tau and no command")
        elif self.kind == "external":
            if not self.command or self.tau is not None:
                raise ConfigError("an external evaluator takes a command and no tau")
        else:
            raise ConfigError(f"unknown evaluator kind {self.kind!r}")

    @classmethod
    def surrogate(cls, tau: float, workers: int = 1) -> Evaluator:
        return cls(kind="surrogate", tau=float(tau), workers=workers)

    @classmethod
    def external(
        cls,
        command: str | list[str] | tuple[str, ...],
        workdir: str | None = None,
        scratch_dir: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        workers: int = 1,
    ) -> Evaluator:
        argv = tuple(shlex.split(command)) if isinstance(command, str) else tuple(command)
        return cls(
            kind="external",
            command=argv,
            workdir=workdir,
            scratch_dir=scratch_dir,
            timeout_s=timeout_s,
            workers=workers,
        )

    @classmethod
    def from_dict(
        cls,
        raw: dict[str, Any],
        scratch_dir: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
    ) -> Evaluator:
        kind = raw.get("kind")
        if kind == "surrogate":
            if "tau" not in raw or "command" in raw:
                raise ConfigError("a surrogate evaluator takes tau and no command")
            return cls.surrogate(float(raw["tau"]), workers=int(raw.get("workers", 1)))
        if kind == "external":
            if not raw.get("command") or "tau" in raw:
                raise ConfigError("an external evaluator takes a command and no tau")
            return cls.external(
                raw["command"],
                workdir=raw.get("workdir"),
                scratch_dir=scratch_dir,
                timeout_s=float(raw.get("timeout", timeout_s)),
                workers=int(raw.get("workers", 1)),
            )
        raise ConfigError(f"unknown evaluator kind {kind!r}")

    def evaluate_fold(self, fold: FoldData, cfg: DenoiserConfig) -> tuple[float, float]:
        return evaluate(self, fold.clean, fold.adversarial, cfg)


def surrogate_accuracy(denoised: DenseTensor, reference: DenseTensor, tau: float) -> float:
    correct = sum(fidelity(ref, out).psnr_db >= tau for ref, out in zip(reference, denoised))
    return correct / denoised.shape[0]


def _command_for(e: Evaluator, manifest: Path) -> list[str]:
    assert e.command is not None
    if any("{manifest}" in arg for arg in e.command):
        return [arg.replace("{manifest}", str(manifest)) for arg in e.command]
    return [*e.command, str(manifest)]


def _parse_response(stdout: str) -> float:
    text = stdout.strip()
    candidates = [text, *reversed([ln for ln in text.splitlines() if ln.strip()])]
    for candidate in candidates:
        try:
            response = json.loads(candidate)
        except ValueError:
            continue
        if isinstance(response, dict) and "accuracy" in response:
            acc = response["accuracy"]
            if isinstance(acc, (int, float)) and not isinstance(acc, bool) and 0.0 <= acc <= 1.0:
                return float(acc)
            raise EvaluatorError(f"accuracy {acc!r} is not a number in [0, 1]")
    raise EvaluatorError(f"no {{\"accuracy\": ...}} object in classifier output: {text[:200]!r}")


def external_accuracy(e: Evaluator, images: DenseTensor, batch: LabeledBatch) -> float:
    if e.scratch_dir:
        Path(e.scratch_dir).mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix="exchange-", dir=e.scratch_dir))
    try:
        write_tensor(scratch / "images.tnsr", images, dtype="float32")
        write_tensor(scratch / "labels.tnsr", batch.labels.astype(np.float64))
        manifest = scratch / "manifest.json"
        manifest.write_text(
            json.dumps(
                {
                    "images": str(scratch / "images.tnsr"),
                    "labels": str(scratch / "labels.tnsr"),
                    "num_classes": batch.num_classes,
                }
            ),
            encoding="utf-8",
        )
        argv = _command_for(e, manifest)
        logger.debug("invoking classifier: %s", argv)
        try:
            proc = subprocess.run(
                argv,
                cwd=e.workdir,
                capture_output=True,
                text=True,
                timeout=e.timeout_s,
                check=False,
            )
        except subprocess.TimeoutExpired as err:
            raise EvaluatorError(f"classifier timed out after {e.timeout_s}s") from err
        except OSError as err:
            raise EvaluatorError(f"cannot run classifier {argv[0]!r}: {err}") from err
        if proc.returncode != 0:
            raise EvaluatorError(
                f"classifier exited with status {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        return _parse_response(proc.stdout)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def evaluate(
    e: Evaluator,
    clean: LabeledBatch,
    adversarial: LabeledBatch,
    cfg: DenoiserConfig,
) -> tuple[float, float]:
    """(clean accuracy, adversarial accuracy) after denoising both batches with `cfg`."""
    check_aligned(clean, adversarial)
    denoised_clean = denoise_batch(clean.images, cfg, workers=e.workers)
    denoised_adv = denoise_batch(adversarial.images, cfg, workers=e.workers)
    if e.kind == "surrogate":
        assert e.tau is not None
        result = (
            surrogate_accuracy(denoised_clean, clean.images, e.tau),
            surrogate_accuracy(denoised_adv, clean.images, e.tau),
        )
    else:
        result = (
            external_accuracy(e, denoised_clean, clean),
            external_accuracy(e, denoised_adv, adversarial),
        )
    logger.info("evaluated %s: clean=%.4f adv=%.4f", cfg.to_dict(), *result)
    return result
