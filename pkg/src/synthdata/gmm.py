"""Balanced Gaussian mixtures with component means on a regular simplex."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GmmDataset:
    points: np.ndarray  # (n, dim)
    labels: np.ndarray  # (n,)
    means: np.ndarray  # (K, dim)
    covariance: np.ndarray  # (dim, dim), shared by all components
    seed: int = 0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def strata(self) -> np.ndarray:
        return self.labels

    @property
    def flat(self) -> np.ndarray:
        return self.points

    def subset(self, idx: np.ndarray) -> "GmmDataset":
        idx = np.asarray(idx, dtype=int)
        return GmmDataset(self.points[idx], self.labels[idx], self.means, self.covariance, self.seed)


def simplex_vertices(K: int, dim: int) -> np.ndarray:
    """K unit vectors in R^dim with pairwise cosine -1/(K-1) (needs dim >= K-1)."""
    if K < 2:
        raise ValueError(f"a simplex needs K >= 2, got {K}")
    if dim < K - 1:
        raise ValueError(f"K={K} simplex vertices need dim >= {K - 1}, got {dim}")
    centered = np.eye(K) - 1.0 / K
    q, _ = np.linalg.qr(centered)
    coords = centered @ q[:, :K - 1]
    coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    out = np.zeros((K, dim))
    out[:, :K - 1] = coords
    return out


def gen_gmm(n: int, K: int, dim: int, separation: float, seed: int = 0) -> GmmDataset:
    """n points, n/K per component, unit isotropic covariance, means at separation * vertex."""
    if K < 2:
        raise ValueError(f"gen_gmm needs K >= 2 components, got {K}")
    if n % K != 0:
        raise ValueError(f"gen_gmm needs n divisible by K, got n={n}, K={K}")
    means = separation * simplex_vertices(K, dim)
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.tile(np.arange(K), n // K))
    points = means[labels] + rng.standard_normal((n, dim))
    return GmmDataset(points, labels, means, np.eye(dim), seed)
