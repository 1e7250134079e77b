"""
Stratified splits and on-disk layout of generated datasets.

A shapes dataset directory holds:

    images/img_0000.pgm ...   one binary graymap per image
    labels.csv                filename, attributes, nuisance draws, mask run lengths
    dataset.bin               exact float64 arrays (images, labels, masks)

A mixture dataset directory holds points.csv and dataset.bin.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from src.io.storage import load_params, rle_encode, save_params, write_pgm
from src.synthdata.gmm import GmmDataset
from src.synthdata.shapes import SIZE, ShapesDataset

logger = logging.getLogger(__name__)

Dataset = Union[ShapesDataset, GmmDataset]


def split_indices(dataset: Dataset, train_frac: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (train, heldout) index arrays stratified by attribute combination."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie strictly between 0 and 1, got {train_frac}")
    idx = np.arange(len(dataset))
    train_idx, held_idx = train_test_split(
        idx, train_size=train_frac, stratify=dataset.strata, random_state=seed
    )
    return np.sort(train_idx), np.sort(held_idx)


def split(dataset: Dataset, train_frac: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Disjoint (train, heldout) subsets; both keep the original item order."""
    train_idx, held_idx = split_indices(dataset, train_frac, seed)
    return dataset.subset(train_idx), dataset.subset(held_idx)


# ============================================================================
# Shapes
# ============================================================================

def save_shapes(dataset: ShapesDataset, directory: Path) -> Path:
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    names = [f"img_{i:04d}.pgm" for i in range(len(dataset))]
    for name, image in zip(names, dataset.images):
        write_pgm(directory / "images" / name, image)

    manifest = dataset.meta.copy()
    manifest.insert(0, "filename", [f"images/{name}" for name in names])
    manifest["shape_name"] = np.where(dataset.shape == 0, "square", "disc")
    manifest["stripe_mask_rle"] = [rle_encode(m) for m in dataset.stripe_masks]
    manifest["shape_mask_rle"] = [rle_encode(m) for m in dataset.shape_masks]
    manifest.to_csv(directory / "labels.csv", index=False)

    save_params(
        directory / "dataset.bin",
        {
            "images": dataset.images,
            "shape": dataset.shape.astype(np.float64),
            "stripe": dataset.stripe.astype(np.float64),
            "shape_masks": dataset.shape_masks.astype(np.float64),
            "stripe_masks": dataset.stripe_masks.astype(np.float64),
            "seed": np.array([dataset.seed], dtype=np.float64),
        },
    )
    logger.info(f"Saved {len(dataset)} shapes images to {directory}")
    return directory


def load_shapes(directory: Path) -> ShapesDataset:
    directory = Path(directory)
    arrays = load_params(directory / "dataset.bin")
    labels = pd.read_csv(directory / "labels.csv")
    meta_cols = ["index", "shape", "stripe", "center_y", "center_x", "radius",
                 "background", "foreground", "stripe_level"]
    images = arrays["images"]
    if images.shape[1:] != (SIZE, SIZE):
        raise ValueError(f"{directory}: expected {SIZE}x{SIZE} images, found {images.shape[1:]}")
    return ShapesDataset(
        images=images,
        shape=arrays["shape"].astype(int),
        stripe=arrays["stripe"].astype(int),
        shape_masks=arrays["shape_masks"].astype(bool),
        stripe_masks=arrays["stripe_masks"].astype(bool),
        meta=labels[meta_cols].reset_index(drop=True),
        seed=int(arrays["seed"][0]),
    )


# ============================================================================
# Mixtures
# ============================================================================

def save_gmm(dataset: GmmDataset, directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.points, columns=[f"x{j}" for j in range(dataset.points.shape[1])])
    frame.insert(0, "label", dataset.labels)
    frame.to_csv(directory / "points.csv", index=False)
    save_params(
        directory / "dataset.bin",
        {
            "points": dataset.points,
            "labels": dataset.labels.astype(np.float64),
            "means": dataset.means,
            "covariance": dataset.covariance,
            "seed": np.array([dataset.seed], dtype=np.float64),
        },
    )
    logger.info(f"Saved {len(dataset)} mixture points to {directory}")
    return directory


def load_gmm(directory: Path) -> GmmDataset:
    arrays = load_params(Path(directory) / "dataset.bin")
    return GmmDataset(
        points=arrays["points"],
        labels=arrays["labels"].astype(int),
        means=arrays["means"],
        covariance=arrays["covariance"],
        seed=int(arrays["seed"][0]),
    )


def load_dataset(directory: Path) -> Dataset:
    """Load whichever dataset kind `directory` holds."""
    directory = Path(directory)
    if (directory / "labels.csv").exists():
        return load_shapes(directory)
    if (directory / "points.csv").exists():
        return load_gmm(directory)
    raise FileNotFoundError(f"{directory}: no labels.csv or points.csv found")
