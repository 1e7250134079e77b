"""
Run configuration: packaged YAML defaults, an optional user file merged on
top, `${VAR:-default}` environment placeholders, and CLI overrides.
"""

from __future__ import annotations

import copy
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).with_name("config.yaml")
_PLACEHOLDER = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def expand_env(value: Any) -> Any:
    """Replace ${VAR} / ${VAR:-default} in every string of a nested structure."""
    if isinstance(value, dict):
        return {k: expand_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [expand_env(v) for v in value]
    if isinstance(value, str):
        return _PLACEHOLDER.sub(lambda m: os.environ.get(m.group(1), m.group(2) or ""), value)
    return value


def deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass
class RunConfig:
    """Nested run parameters plus the global seed and output directory."""

    raw: dict = field(repr=False)
    seed: int = 0
    out_dir: Path = Path("./runs/default")

    def section(self, name: str) -> dict:
        return self.raw.get(name) or {}

    def stage_dir(self, stage: str) -> Path:
        """Directory of a stage's artifacts: inputs.<stage> if set, else <out_dir>/<stage>."""
        override = self.section("inputs").get(stage)
        return Path(override) if override else self.out_dir / stage

    def to_dict(self) -> dict:
        data = copy.deepcopy(self.raw)
        data["seed"] = self.seed
        data.setdefault("paths", {})["out_dir"] = str(self.out_dir)
        return data


def load_config(
    path: Optional[Path] = None, seed: Optional[int] = None, out: Optional[Path] = None
) -> RunConfig:
    """Defaults <- user file <- CLI overrides.

    Args:
        path: optional YAML file (for instance a previous run's echoed config).
        seed: overrides `seed` when given.
        out: overrides `paths.out_dir` when given.
    """
    load_dotenv()
    with open(DEFAULT_CONFIG, "r") as f:
        raw = yaml.safe_load(f)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        with open(path, "r") as f:
            raw = deep_merge(raw, yaml.safe_load(f) or {})
        logger.info(f"Loaded config overrides from {path}")
    raw = expand_env(raw)
    if seed is not None:
        raw["seed"] = int(seed)
    if out is not None:
        raw.setdefault("paths", {})["out_dir"] = str(out)
    return RunConfig(raw=raw, seed=int(raw.get("seed", 0)), out_dir=Path(raw["paths"]["out_dir"]))
