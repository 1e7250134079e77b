"""Helpers shared by the pipeline commands: artifact loading, settings, splits."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from src.caso.embedding import EditConfig, SemanticEmbedding, load_embeddings
from src.config.loader import RunConfig
from src.diffusion.schedule import NoiseSchedule, make_schedule
from src.io.storage import sha256sum, write_yaml
from src.models.classifier import ClassifierModel
from src.models.codec import Codec
from src.models.denoiser import DenoiserModel
from src.synthdata.gmm import GmmDataset
from src.synthdata.store import Dataset, load_dataset
from src.utils.provenance import RunManifest, resolve_artifact

logger = logging.getLogger(__name__)


def start_stage(cfg: RunConfig, command: str, stage: str) -> RunManifest:
    """Create `<out_dir>/<stage>`, echo the effective config there and open its manifest."""
    stage_dir = cfg.out_dir / stage
    stage_dir.mkdir(parents=True, exist_ok=True)
    write_yaml(stage_dir / "config.yaml", cfg.to_dict())
    logger.info(f"{command}: writing to {stage_dir}")
    return RunManifest(command=command, stage_dir=stage_dir, config=cfg.to_dict())


def schedule_from(cfg: RunConfig) -> NoiseSchedule:
    s = cfg.section("schedule")
    return make_schedule(int(s["T"]), float(s["beta_min"]), float(s["beta_max"]))


def edit_config_from(cfg: RunConfig, **overrides) -> EditConfig:
    e, emb = cfg.section("edit"), cfg.section("embedding")
    settings = dict(
        scale=float(e["scale"]),
        L_frac=float(e["L_frac"]),
        gamma=float(emb["gamma"]),
        window=tuple(e["window"]),
        steps=int(e["steps"]),
        seed=cfg.seed,
        n_tokens=int(emb["n_tokens"]),
        lr=float(emb["lr"]),
        weight_decay=float(emb["weight_decay"]),
    )
    settings.update(overrides)
    return EditConfig(**settings)


def attribute_labels(dataset: Dataset, attribute: str) -> np.ndarray:
    if isinstance(dataset, GmmDataset):
        return dataset.labels
    return dataset.labels(attribute)


def classifier_attributes(cfg: RunConfig, dataset: Dataset) -> list[str]:
    if isinstance(dataset, GmmDataset):
        return ["component"]
    return list(cfg.section("classifier")["attributes"])


def balanced_indices(labels: np.ndarray) -> np.ndarray:
    """The first m items of every class, m the smallest class count (sorted)."""
    labels = np.asarray(labels, dtype=int)
    counts = np.bincount(labels)
    m = counts[counts > 0].min()
    keep = [np.flatnonzero(labels == a)[:m] for a in np.flatnonzero(counts)]
    return np.sort(np.concatenate(keep))


# ============================================================================
# Artifact loading (every file is verified against its producing manifest)
# ============================================================================

def load_data(cfg: RunConfig, manifest: RunManifest) -> tuple[Dataset, Dataset, Dataset]:
    """(full, train, heldout) as recorded by gen-data."""
    data_dir = cfg.stage_dir("data")
    resolve_artifact(data_dir, "dataset.bin", manifest)
    split_path = resolve_artifact(data_dir, "split.csv", manifest)
    dataset = load_dataset(data_dir)
    parts = pd.read_csv(split_path)
    train = dataset.subset(parts.loc[parts["part"] == "train", "index"].to_numpy())
    heldout = dataset.subset(parts.loc[parts["part"] == "heldout", "index"].to_numpy())
    return dataset, train, heldout


def _network_stem(stage_dir: Path, name: str, manifest: RunManifest) -> Path:
    resolve_artifact(stage_dir, f"{name}.bin", manifest)
    resolve_artifact(stage_dir, f"{name}.yaml", manifest)
    return stage_dir / name


def load_codec(cfg: RunConfig, manifest: RunManifest) -> Codec:
    return Codec.load(_network_stem(cfg.stage_dir("denoiser"), "codec", manifest))


def load_denoiser(cfg: RunConfig, manifest: RunManifest) -> DenoiserModel:
    return DenoiserModel.load(_network_stem(cfg.stage_dir("denoiser"), "denoiser", manifest))


def load_classifier(cfg: RunConfig, attribute: str, manifest: RunManifest) -> ClassifierModel:
    return ClassifierModel.load(_network_stem(cfg.stage_dir("classifier"), attribute, manifest))


def load_attribute_embeddings(cfg: RunConfig, attribute: str, manifest: RunManifest) -> list[SemanticEmbedding]:
    return load_embeddings(_network_stem(cfg.stage_dir("embeddings"), attribute, manifest))


def has_artifact(cfg: RunConfig, stage: str, name: str) -> bool:
    return (cfg.stage_dir(stage) / name).exists()


def dataset_fingerprint(cfg: RunConfig) -> Optional[str]:
    path = cfg.stage_dir("data") / "dataset.bin"
    return sha256sum(path) if path.exists() else None
