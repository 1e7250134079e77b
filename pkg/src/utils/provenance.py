"""
Run manifests: what a command read, what it wrote, and the sha256 of each.

Every stage directory ends with a `manifest.yaml`:

    command: train-classifier
    version: 0.1.0
    config: {...}                 # effective run config
    inputs: {data/dataset.bin: <sha256>, ...}
    artifacts: {stripe.bin: <sha256>, ...}   # relative to the stage directory
    metrics: {...}
    wall_clock: 12.3

Consumers resolve inputs through `resolve_artifact`, which refuses files
whose checksum no longer matches the producing manifest.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from src import __version__
from src.errors import ArtifactError, FingerprintError
from src.io.storage import read_yaml, sha256sum, to_plain, write_yaml

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.yaml"


@dataclass
class RunManifest:
    command: str
    stage_dir: Path
    config: dict = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)
    started: float = field(default_factory=time.perf_counter)

    def add_input(self, path: Path) -> Path:
        self.inputs[str(path)] = sha256sum(path)
        return path

    def add_artifact(self, path: Path) -> Path:
        path = Path(path)
        if not path.exists():
            raise ArtifactError(f"Artifact was not written: {path}")
        self.artifacts[path.relative_to(self.stage_dir).as_posix()] = sha256sum(path)
        return path

    def add_artifacts(self, *paths: Path) -> None:
        for path in paths:
            self.add_artifact(path)

    def nan_metrics(self) -> list[str]:
        return [k for k, v in _flatten(self.metrics) if isinstance(v, float) and math.isnan(v)]

    def write(self) -> Path:
        """Write the manifest atomically; only files that exist are referenced."""
        for rel in self.artifacts:
            if not (self.stage_dir / rel).exists():
                raise ArtifactError(f"Manifest references a missing artifact: {self.stage_dir / rel}")
        body = {
            "command": self.command,
            "version": __version__,
            "config": self.config,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "metrics": to_plain(self.metrics),
            "wall_clock": round(time.perf_counter() - self.started, 3),
        }
        path = write_yaml(self.stage_dir / MANIFEST_NAME, body)
        logger.info(f"Wrote manifest {path} ({len(self.artifacts)} artifacts)")
        return path


def _flatten(metrics: dict, prefix: str = ""):
    for key, value in metrics.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, f"{name}.")
        elif isinstance(value, (list, tuple)):
            for i, v in enumerate(value):
                yield f"{name}[{i}]", v
        else:
            yield name, value


def resolve_artifact(stage_dir: Path, name: str, manifest: Optional[RunManifest] = None) -> Path:
    """Path of `name` inside `stage_dir`, verified against the stage's manifest.

    Raises:
        ArtifactError: the file or the stage manifest does not exist.
        FingerprintError: the file's sha256 differs from the recorded one.
    """
    stage_dir = Path(stage_dir)
    path = stage_dir / name
    if not path.exists():
        raise ArtifactError(f"Required artifact not found: {path}")
    manifest_path = stage_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise ArtifactError(f"Stage manifest not found: {manifest_path}")
    recorded = read_yaml(manifest_path).get("artifacts", {})
    if name not in recorded:
        raise ArtifactError(f"{path} is not listed in {manifest_path}")
    actual = sha256sum(path)
    if actual != recorded[name]:
        raise FingerprintError(path, recorded[name], actual)
    if manifest is not None:
        manifest.inputs[str(path)] = actual
    return path


def verify_manifest(stage_dir: Path) -> list[str]:
    """Names of the artifacts in `stage_dir` whose checksum no longer matches."""
    stage_dir = Path(stage_dir)
    recorded = read_yaml(stage_dir / MANIFEST_NAME).get("artifacts", {})
    bad = []
    for name, expected in recorded.items():
        path = stage_dir / name
        if not path.exists() or sha256sum(path) != expected:
            bad.append(name)
    return bad
