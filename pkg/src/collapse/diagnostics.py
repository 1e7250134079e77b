"""
Neural-collapse diagnostics on penultimate classifier features.

Conventions (K classes, features h of width p):

    mu_a        = mean of class a features - global mean
    global mean = unweighted mean of the K class means
    Sigma_B     = (1/K) sum_a mu_a mu_a^T
    Sigma_W     = (1/N) sum_i (h_i - m_{y_i})(h_i - m_{y_i})^T
    Sigma_T     = (1/N) sum_i (h_i - g)(h_i - g)^T

With equal class counts Sigma_T == Sigma_B + Sigma_W, which is why
`covariances` refuses unbalanced input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from src.caso.editing import edit, generate_single_step
from src.caso.embedding import EditConfig, SemanticEmbedding
from src.diffusion.schedule import NoiseSchedule
from src.io.storage import write_yaml
from src.models.classifier import ClassifierModel
from src.models.codec import Codec
from src.models.denoiser import DenoiserModel

logger = logging.getLogger(__name__)


def _class_ids(labels: np.ndarray, n_classes: Optional[int]) -> int:
    return int(n_classes) if n_classes is not None else int(np.max(labels)) + 1


# ============================================================================
# Class means, covariances, ETF geometry
# ============================================================================

def class_means(features: np.ndarray, labels, n_classes: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Globally-centred class means.

    Returns:
        (mu, global_mean): mu has shape (K, p), row a is mu_a.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    K = _class_ids(labels, n_classes)
    means = np.empty((K, features.shape[1]))
    for a in range(K):
        rows = features[labels == a]
        if len(rows) == 0:
            raise ValueError(f"class {a} has no samples")
        means[a] = rows.mean(axis=0)
    global_mean = means.mean(axis=0)
    return means - global_mean, global_mean


def covariances(
    features: np.ndarray, labels, n_classes: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Sigma_B, Sigma_W, Sigma_T) for balanced classes."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    K = _class_ids(labels, n_classes)
    counts = np.bincount(labels, minlength=K)
    if len(set(counts.tolist())) != 1:
        raise ValueError(f"covariances need balanced classes, got counts {counts.tolist()}")
    mu, global_mean = class_means(features, labels, K)
    class_mean = mu + global_mean
    within = features - class_mean[labels]
    total = features - global_mean
    n = len(features)
    sigma_b = mu.T @ mu / K
    sigma_w = within.T @ within / n
    sigma_t = total.T @ total / n
    return sigma_b, sigma_w, sigma_t


def etf_metrics(mu: np.ndarray) -> tuple[np.ndarray, float]:
    """Pairwise cosine matrix of the class means and their relative norm spread."""
    mu = np.asarray(mu, dtype=np.float64)
    norms = np.linalg.norm(mu, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"class means with zero norm: classes {np.flatnonzero(norms == 0).tolist()}")
    unit = mu / norms[:, None]
    cos = unit @ unit.T
    cos = 0.5 * (cos + cos.T)
    np.fill_diagonal(cos, 1.0)
    cos = np.clip(cos, -1.0, 1.0)
    spread = float((norms.max() - norms.min()) / norms.mean())
    return cos, spread


# ============================================================================
# Weight / mean alignment
# ============================================================================

def row_cosines(W: np.ndarray, M: np.ndarray) -> np.ndarray:
    """cos(W[a], M[a]) for each row a."""
    W = np.asarray(W, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    wn = np.linalg.norm(W, axis=1)
    mn = np.linalg.norm(M, axis=1)
    bad = np.flatnonzero((wn == 0) | (mn == 0))
    if len(bad):
        raise ValueError(f"zero-norm weight or mean for classes {bad.tolist()}")
    return np.clip(np.sum(W * M, axis=1) / (wn * mn), -1.0, 1.0)


def beta_fit(W: np.ndarray, M: np.ndarray) -> tuple[float, float]:
    """Least-squares beta for W ~ beta * M and the relative residual ||W - beta M||_F / ||W||_F."""
    W = np.asarray(W, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    mm = float(np.sum(M * M))
    if mm == 0.0:
        raise ValueError("beta_fit: M is identically zero")
    beta = float(np.sum(W * M)) / mm
    residual = float(np.linalg.norm(W - beta * M) / np.linalg.norm(W))
    return beta, residual


def weight_mean_alignment(classifier: ClassifierModel, features: np.ndarray, labels) -> np.ndarray:
    """cos(w_a, mu_a) per class on the classifier's own features."""
    mu, _ = class_means(features, labels, classifier.n_classes)
    return row_cosines(classifier.weight, mu)


def make_generator(
    cfg: EditConfig,
    denoiser: DenoiserModel,
    codec: Codec,
    schedule: NoiseSchedule,
    multi_step: bool = False,
) -> Callable[[np.ndarray, SemanticEmbedding], np.ndarray]:
    """G(x, e): the single-step generator by default, the full edit when `multi_step`."""

    def single(x: np.ndarray, embedding: SemanticEmbedding) -> np.ndarray:
        x_hat, _, _ = generate_single_step(x, embedding.as_condition(), cfg, denoiser, codec, schedule)
        return x_hat.data

    def multi(x: np.ndarray, embedding: SemanticEmbedding) -> np.ndarray:
        return edit(x, embedding, cfg, denoiser, codec, schedule).reshape(len(x), -1)

    return multi if multi_step else single


@dataclass
class GeneratedAlignment:
    mu_prime: np.ndarray
    cosines: np.ndarray
    beta: float
    residual: float


def generated_alignment(
    classifier: ClassifierModel,
    embeddings: Sequence[SemanticEmbedding],
    images: np.ndarray,
    generate: Callable[[np.ndarray, SemanticEmbedding], np.ndarray],
    source_labels: Optional[np.ndarray] = None,
) -> GeneratedAlignment:
    """Alignment of w_a with the centred class means of generated images.

    mu'_a = E_i[F_{-1}(G(x_i, e_a))] - mean over a of the same quantity.
    By default every image is generated toward every class; with
    `source_labels`, class a only uses the images already labelled a.
    """
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    K = classifier.n_classes
    if len(embeddings) != K:
        raise ValueError(f"need one embedding per class: {len(embeddings)} embeddings for K={K}")
    means = np.empty((K, classifier.config.feature_dim))
    for a, embedding in enumerate(embeddings):
        rows = x if source_labels is None else x[np.asarray(source_labels) == a]
        if len(rows) == 0:
            raise ValueError(f"no source images for class {a}")
        generated = generate(rows, embedding)
        means[a] = classifier.features(generated).data.mean(axis=0)
    mu_prime = means - means.mean(axis=0)
    cosines = row_cosines(classifier.weight, mu_prime)
    beta, residual = beta_fit(classifier.weight, mu_prime)
    return GeneratedAlignment(mu_prime, cosines, beta, residual)


# ============================================================================
# Report
# ============================================================================

@dataclass
class CollapseReport:
    mu: np.ndarray
    global_mean: np.ndarray
    Sigma_B: np.ndarray = field(repr=False)
    Sigma_W: np.ndarray = field(repr=False)
    Sigma_T: np.ndarray = field(repr=False)
    etf_cos: np.ndarray = field(repr=False)
    norm_spread: float = 0.0
    wa_mu_cos: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta_fit: float = 0.0
    beta_residual: float = 0.0
    collapse_ratio: float = 0.0
    accuracy: float = 0.0
    counts: list[int] = field(default_factory=list)

    @property
    def decomposition_error(self) -> float:
        return float(np.max(np.abs(self.Sigma_T - (self.Sigma_B + self.Sigma_W))))

    def to_dict(self) -> dict:
        K = len(self.mu)
        off = self.etf_cos[~np.eye(K, dtype=bool)] if K > 1 else np.zeros(0)
        return {
            "n_classes": K,
            "counts": self.counts,
            "accuracy": self.accuracy,
            "collapse_ratio": self.collapse_ratio,
            "trace_sigma_b": float(np.trace(self.Sigma_B)),
            "trace_sigma_w": float(np.trace(self.Sigma_W)),
            "decomposition_error": self.decomposition_error,
            "etf_target_cos": -1.0 / (K - 1) if K > 1 else None,
            "etf_offdiag_mean": float(off.mean()) if off.size else None,
            "etf_cos": self.etf_cos,
            "norm_spread": self.norm_spread,
            "wa_mu_cos": self.wa_mu_cos,
            "beta_fit": self.beta_fit,
            "beta_residual": self.beta_residual,
            "global_mean": self.global_mean,
            "mu": self.mu,
        }

    def to_yaml(self, path: Path) -> Path:
        return write_yaml(path, self.to_dict())

    def per_class_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "class": np.arange(len(self.mu)),
                "count": self.counts,
                "mu_norm": np.linalg.norm(self.mu, axis=1),
                "wa_mu_cos": self.wa_mu_cos,
            }
        )


def collapse_report(classifier: ClassifierModel, data: np.ndarray, labels) -> CollapseReport:
    """Every collapse statistic of `classifier` on (data, labels) in one bundle."""
    x = np.asarray(data, dtype=np.float64).reshape(len(data), -1)
    labels = np.asarray(labels, dtype=int)
    features = classifier.features(x).data
    K = classifier.n_classes
    mu, global_mean = class_means(features, labels, K)
    sigma_b, sigma_w, sigma_t = covariances(features, labels, K)
    etf_cos, spread = etf_metrics(mu)
    W = classifier.weight
    beta, residual = beta_fit(W, mu)
    return CollapseReport(
        mu=mu,
        global_mean=global_mean,
        Sigma_B=sigma_b,
        Sigma_W=sigma_w,
        Sigma_T=sigma_t,
        etf_cos=etf_cos,
        norm_spread=spread,
        wa_mu_cos=row_cosines(W, mu),
        beta_fit=beta,
        beta_residual=residual,
        collapse_ratio=float(np.trace(sigma_w) / np.trace(sigma_b)),
        accuracy=classifier.accuracy(x, labels),
        counts=np.bincount(labels, minlength=K).tolist(),
    )


def features_frame(features: np.ndarray, labels) -> pd.DataFrame:
    """Feature dump (one row per sample) for external projection."""
    features = np.asarray(features, dtype=np.float64)
    frame = pd.DataFrame(features, columns=[f"h{j}" for j in range(features.shape[1])])
    frame.insert(0, "label", np.asarray(labels, dtype=int))
    return frame
