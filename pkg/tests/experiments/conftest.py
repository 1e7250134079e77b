"""Session-scoped runs of the full shapes pipeline at default settings.

Every stage goes through the command-line entry point, so these runs also
exercise config loading, manifests and artifact verification.
"""

from pathlib import Path

import pytest
import yaml

from src.cli import main
from src.io.storage import read_yaml

STAGES = ["gen-data", "train-denoiser", "train-classifier", "learn-embedding"]


def run_stage(out: Path, command: str, overrides: dict) -> dict:
    """Run one CLI stage with a YAML override file; returns the stage manifest."""
    out.mkdir(parents=True, exist_ok=True)
    config = out / f"{command}.override.yaml"
    config.write_text(yaml.safe_dump(overrides))
    code = main([command, "--config", str(config), "--out", str(out)])
    assert code == 0, f"{command} exited with {code}"
    stage = {"gen-data": "data", "train-denoiser": "denoiser", "train-classifier": "classifier",
             "learn-embedding": "embeddings", "edit": "edit", "diagnose": "diagnose"}[command]
    return read_yaml(out / stage / "manifest.yaml")


@pytest.fixture(scope="session")
def stage_runner():
    return run_stage


@pytest.fixture(scope="session")
def base_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("caso")
    manifests = {command: run_stage(out, command, {}) for command in STAGES}
    return out, manifests


@pytest.fixture(scope="session")
def inputs(base_run):
    out, _ = base_run
    return {stage: str(out / stage) for stage in ("data", "denoiser", "classifier", "embeddings")}


@pytest.fixture(scope="session")
def edit_run(tmp_path_factory, inputs):
    """edit_run(name, **edit_settings) -> edit manifest, cached per name."""
    cache = {}

    def run(name: str, **edit_settings) -> dict:
        if name not in cache:
            out = tmp_path_factory.mktemp(f"edit_{name}")
            cache[name] = run_stage(out, "edit", {"inputs": inputs, "edit": edit_settings})
        return cache[name]

    return run


@pytest.fixture(scope="session")
def diagnose_run(tmp_path_factory, inputs):
    out = tmp_path_factory.mktemp("diagnose")
    manifest = run_stage(out, "diagnose", {"inputs": inputs})
    return out / "diagnose", manifest
