from __future__ import annotations

import json
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from tensordenoise.cli import main
from tensordenoise.config.env import Settings, load_settings
from tensordenoise.config.logging import COMPONENT_LOGS, attach_context, configure_logging
from tensordenoise.config.manifest import RunManifest
from tensordenoise.errors import ConfigError, FormatError
from tensordenoise.formats.container import write_tensor

ENV_VARS = (
    "TENSORDENOISE_LOG_LEVEL",
    "TENSORDENOISE_LOG_DIR",
    "TENSORDENOISE_SCRATCH_DIR",
    "TENSORDENOISE_RANK_STEP",
    "TENSORDENOISE_RANK_K_CAP",
    "TENSORDENOISE_HOOI_MAX_ITERS",
    "TENSORDENOISE_HOOI_TOL",
    "TENSORDENOISE_EVALUATOR_TIMEOUT",
)


@pytest.fixture
def clean_env(monkeypatch: pytest.MonkeyPatch) -> pytest.MonkeyPatch:
    for name in ENV_VARS:
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


@pytest.fixture
def settings(clean_env: pytest.MonkeyPatch, tmp_path: Path) -> Settings:
    clean_env.setenv("TENSORDENOISE_SCRATCH_DIR", str(tmp_path / "scratch"))
    return load_settings()


# --- settings --------------------------------------------------------------


def test_settings_defaults(clean_env: pytest.MonkeyPatch) -> None:
    s = load_settings()
    assert (s.log_level, s.rank_step, s.rank_k_cap) == ("INFO", 4, 80)
    assert s.hooi_max_iters == 25 and s.hooi_tol == 1e-6
    assert s.evaluator_timeout_s == 600.0


def test_settings_from_environment(clean_env: pytest.MonkeyPatch) -> None:
    clean_env.setenv("TENSORDENOISE_RANK_STEP", "2")
    clean_env.setenv("TENSORDENOISE_HOOI_TOL", "1e-9")
    clean_env.setenv("TENSORDENOISE_RANK_K_CAP", "  ")
    s = load_settings()
    assert s.rank_step == 2 and s.hooi_tol == 1e-9 and s.rank_k_cap == 80


@pytest.mark.parametrize(
    ("name", "value"),
    [("TENSORDENOISE_RANK_STEP", "four"), ("TENSORDENOISE_HOOI_TOL", "tiny")],
)
def test_bad_settings_are_config_errors(
    clean_env: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str], name: str, value: str
) -> None:
    clean_env.setenv(name, value)
    with pytest.raises(ConfigError, match=name):
        load_settings()
    argv = ["perturb", "--input", "x", "--output", "y", "--norm", "linf"]
    assert main([*argv, "--epsilon", "0.1", "--seed", "1"]) == 2
    assert name in capsys.readouterr().err


# --- logging ---------------------------------------------------------------


def _file_handlers(name: str) -> list[RotatingFileHandler]:
    return [h for h in logging.getLogger(name).handlers if isinstance(h, RotatingFileHandler)]


def test_configure_logging_is_idempotent(tmp_path: Path) -> None:
    configure_logging("DEBUG", tmp_path)
    configure_logging("DEBUG", tmp_path)
    assert len(_file_handlers("")) == 1
    stderr = [h for h in logging.getLogger().handlers if getattr(h, "_tensordenoise_stderr", False)]
    assert len(stderr) == 1
    for name, filename in COMPONENT_LOGS.items():
        assert len(_file_handlers(name)) == 1
        assert (tmp_path / filename).is_file()
    assert logging.getLogger("tensordenoise.search").level == logging.DEBUG


def test_configure_logging_through_a_symlinked_dir(tmp_path: Path) -> None:
    real = tmp_path / "real"
    real.mkdir()
    link = tmp_path / "link"
    link.symlink_to(real, target_is_directory=True)
    configure_logging("INFO", link)
    configure_logging("INFO", link)
    assert len(_file_handlers("")) == 1
    for name in COMPONENT_LOGS:
        assert len(_file_handlers(name)) == 1


def test_context_fields_reach_the_log_files(tmp_path: Path) -> None:
    configure_logging("INFO", tmp_path)
    attach_context(run_id="sweep-1")
    search = logging.getLogger("tensordenoise.search")
    search.info("scored", extra={"trial_id": 3, "fold": "fold2"})
    search.info("no trial")
    attach_context(run_id="sweep-2", trial_id=9)
    search.info("later")

    lines = (tmp_path / "search.log").read_text().splitlines()
    assert "run=sweep-1 trial=3 fold=fold2 scored" in lines[0]
    assert "run=sweep-1 trial=- fold=- no trial" in lines[1]
    assert "run=sweep-2 trial=9 fold=- later" in lines[2]
    assert "later" in (tmp_path / "main.log").read_text()


# --- run manifest ----------------------------------------------------------


def manifest_dict(**overrides: Any) -> dict[str, Any]:
    raw: dict[str, Any] = {
        "evaluator": {"kind": "surrogate", "tau": 30},
        "folds": [{"clean": "c.tnsr", "adversarial": "a.tnsr"}],
        "budget": 10,
        "seed": 0,
        "out_dir": "out",
    }
    raw.update(overrides)
    return {k: v for k, v in raw.items() if v is not None}


def test_manifest_defaults_and_paths(settings: Settings, tmp_path: Path) -> None:
    m = RunManifest.from_dict(manifest_dict(), base=tmp_path, settings=settings)
    assert m.out_dir == tmp_path / "out"
    assert m.space == {"rank_step": 4, "rank_k_cap": 80}
    assert m.evaluator.kind == "surrogate" and m.evaluator.tau == 30.0
    assert m.variant == "cifar10"
    raw = manifest_dict(out_dir=str(tmp_path / "abs"))
    absolute = RunManifest.from_dict(raw, settings=settings)
    assert absolute.out_dir == tmp_path / "abs"


def test_manifest_space_defaults_follow_settings(clean_env: pytest.MonkeyPatch) -> None:
    clean_env.setenv("TENSORDENOISE_RANK_STEP", "8")
    m = RunManifest.from_dict(manifest_dict(space={"rank_k_cap": 40}), settings=load_settings())
    assert m.space == {"rank_k_cap": 40, "rank_step": 8}


def test_external_manifest_takes_scratch_and_timeout(settings: Settings) -> None:
    evaluator = {"kind": "external", "command": "python clf.py", "workdir": "/srv"}
    raw = manifest_dict(evaluator=evaluator)
    e = RunManifest.from_dict(raw, settings=settings).evaluator
    assert e.command == ("python", "clf.py") and e.workdir == "/srv"
    assert e.scratch_dir == settings.scratch_dir
    assert e.timeout_s == 600.0


@pytest.mark.parametrize(
    "overrides",
    [
        {"colour": "blue"},
        {"budget": None},
        {"out_dir": None},
        {"budget": 0},
        {"budget": True},
        {"budget": 2.5},
        {"seed": -1},
        {"dataset": {"clean": "c.bin", "adversarial": "a.bin"}},
        {"folds": None},
        {"folds": []},
        {"folds": [{"clean": "c.tnsr"}]},
        {"variant": "mnist"},
        {"space": {"patch_sizes": ["big"]}},
        {"space": {"strides": []}},
        {"evaluator": {"kind": "surrogate"}},
    ],
)
def test_manifest_validation(settings: Settings, overrides: dict[str, Any]) -> None:
    with pytest.raises(ConfigError):
        RunManifest.from_dict(manifest_dict(**overrides), settings=settings)


def test_manifest_load_errors(settings: Settings, tmp_path: Path) -> None:
    with pytest.raises(FormatError):
        RunManifest.load(tmp_path / "none.json", settings)
    (tmp_path / "bad.json").write_text("[1, 2")
    with pytest.raises(ConfigError, match="invalid JSON"):
        RunManifest.load(tmp_path / "bad.json", settings)
    (tmp_path / "list.json").write_text("[]")
    with pytest.raises(ConfigError):
        RunManifest.load(tmp_path / "list.json", settings)


def _cifar_records(labels: list[int], rng: np.random.Generator) -> bytes:
    out = b""
    for label in labels:
        out += bytes([label]) + rng.integers(0, 256, size=3072, dtype=np.uint8).tobytes()
    return out


def test_dataset_manifest_splits_into_folds(
    settings: Settings, tmp_path: Path, rng: np.random.Generator
) -> None:
    labels = [n % 10 for n in range(20)]
    (tmp_path / "clean.bin").write_bytes(_cifar_records(labels, rng))
    (tmp_path / "adv.bin").write_bytes(_cifar_records(labels, rng))
    raw = manifest_dict(
        folds=None,
        dataset={"clean": "clean.bin", "adversarial": "adv.bin", "n_folds": 8, "limit": 16},
    )
    path = tmp_path / "m.json"
    path.write_text(json.dumps(raw))
    m = RunManifest.load(path, settings)
    folds = m.load_folds()
    assert len(folds) == 8
    assert all(len(f.clean) == 2 for f in folds)
    assert sorted(int(x) for f in folds for x in f.clean.labels) == sorted(labels[:16])
    space = m.search_space(folds)
    assert space.image_shape == (3, 32, 32)
    # the split is a pure function of the manifest seed
    again = m.load_folds()
    assert all(np.array_equal(a.clean.labels, b.clean.labels) for a, b in zip(folds, again))


def test_container_folds_and_shape_agreement(settings: Settings, tmp_path: Path) -> None:
    for name, side in (("a", 8), ("b", 8), ("c", 12)):
        write_tensor(tmp_path / f"{name}.tnsr", np.full((2, 1, side, side), 0.5))
        write_tensor(tmp_path / f"{name}.labels.tnsr", np.array([1.0, 2.0]))
    folds = [
        {"clean": "a.tnsr", "adversarial": "b.tnsr"},
        {"clean": "c.tnsr", "adversarial": "c.tnsr"},
    ]
    m = RunManifest.from_dict(manifest_dict(folds=folds), base=tmp_path, settings=settings)
    loaded = m.load_folds()
    assert [f.name for f in loaded] == ["fold0", "fold1"]
    with pytest.raises(ConfigError, match="different shapes"):
        m.search_space(loaded)
    write_tensor(tmp_path / "a.labels.tnsr", np.array([1.5, 2.0]))
    with pytest.raises(FormatError, match="integers"):
        m.load_folds()
