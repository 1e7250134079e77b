"""Deterministic procedural datasets with ground-truth attribute labels."""

from src.synthdata.gmm import GmmDataset, gen_gmm, simplex_vertices
from src.synthdata.shapes import ShapesDataset, gen_shapes
from src.synthdata.store import (
    load_dataset,
    load_gmm,
    load_shapes,
    save_gmm,
    save_shapes,
    split,
    split_indices,
)

__all__ = [
    "GmmDataset",
    "ShapesDataset",
    "gen_gmm",
    "gen_shapes",
    "load_dataset",
    "load_gmm",
    "load_shapes",
    "save_gmm",
    "save_shapes",
    "simplex_vertices",
    "split",
    "split_indices",
]
