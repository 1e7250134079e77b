"""
Classifier-guided optimisation of the semantic embeddings.

For every iteration a batch of images is encoded and noised to L with one
shared noise draw. For each class a the guided single-step prediction with
e_a is decoded and scored by the classifier against a one-hot target for a
(edit loss), while the predicted clean latent is pulled toward the true one
(reconstruction loss). The objective averages edit + gamma * reconstruction
over classes and is minimised over {e_a} only; every model stays frozen.
"""

from __future__ import annotations

import logging
import time
from contextlib import ExitStack
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from src.autodiff import ops
from src.autodiff.optim import OptimizerState, adamw_step
from src.autodiff.tensor import Tape, Tensor, zero_grad
from src.caso.editing import edit_success_rate, edit_towards, generate_single_step
from src.caso.embedding import EditConfig, SemanticEmbedding, init_embeddings
from src.diffusion.schedule import NoiseSchedule
from src.errors import DivergenceError
from src.models.classifier import ClassifierModel
from src.models.codec import Codec
from src.models.common import one_hot
from src.models.denoiser import DenoiserModel

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingTrainReport:
    history: pd.DataFrame = field(repr=False)
    edit_success: float = float("nan")
    wall_clock: float = 0.0

    def summary(self) -> dict:
        last = self.history.iloc[-1] if len(self.history) else None
        return {
            "iterations": int(len(self.history)),
            "final_edit_loss": float(last["edit_loss"]) if last is not None else None,
            "final_rec_loss": float(last["rec_loss"]) if last is not None else None,
            "final_combined_loss": float(last["combined_loss"]) if last is not None else None,
            "edit_success": float(self.edit_success),
            "wall_clock": float(self.wall_clock),
        }


def _snapshot(*models) -> list[dict[str, np.ndarray]]:
    return [m.state_dict() for m in models]


def _assert_unchanged(before: list[dict[str, np.ndarray]], models) -> None:
    for state, model in zip(before, models):
        for name, p in model.params.named_parameters():
            if not np.array_equal(state[name], p.data):
                raise AssertionError(f"{model.kind} parameter {name} changed while it was frozen")


def learn_embeddings(
    images: np.ndarray,
    labels: np.ndarray,
    denoiser: DenoiserModel,
    classifier: ClassifierModel,
    codec: Codec,
    schedule: NoiseSchedule,
    cfg: EditConfig,
    iters: int = 300,
    batch: int = 32,
    heldout: Optional[tuple[np.ndarray, np.ndarray]] = None,
    attribute: str = "",
    judge: Optional[ClassifierModel] = None,
) -> tuple[list[SemanticEmbedding], EmbeddingTrainReport]:
    """Optimise one embedding per classifier class.

    Args:
        images: (n, ...) training images for the attribute.
        labels: (n,) their classes; used only for the held-out report.
        cfg: guidance scale, L_frac, gamma, token count, optimiser settings, seed.
        heldout: optional (images, labels); when given, every held-out image is
            edited toward (label + 1) mod K after training and the success
            rate is reported.
        judge: classifier that scores the held-out edits, e.g. an independently
            seeded one for a no-leakage check; defaults to `classifier`.

    Returns:
        (embeddings, report); embeddings[a] belongs to class a.
    """
    images = np.asarray(images, dtype=np.float64)
    x = images.reshape(len(images), -1)
    n = len(x)
    if batch > n:
        raise ValueError(f"batch {batch} exceeds dataset size {n}")
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    K = classifier.n_classes
    L = schedule.level(cfg.L_frac)
    started = time.perf_counter()

    embeddings = init_embeddings(
        denoiser.null_embedding.data, K, cfg.n_tokens, seed=cfg.seed, attribute=attribute
    )
    tokens = [Tensor(e.tokens, requires_grad=True, name=f"e_{a}") for a, e in enumerate(embeddings)]
    state = OptimizerState.for_params(tokens, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)
    models = (denoiser, classifier, codec)
    before = _snapshot(*models)
    rows = []

    with ExitStack() as stack:
        for model in models:
            stack.enter_context(model.frozen())
        for it in tqdm(range(iters), desc="embeddings", leave=False, disable=None):
            idx = rng.choice(n, size=batch, replace=False)
            eps = rng.standard_normal((batch, codec.latent_dim))
            tape = Tape()
            with tape:
                edit_terms, rec_terms = [], []
                for a in range(K):
                    target = Tensor(one_hot(np.full(batch, a), K))
                    x_hat, z0_hat, z0 = generate_single_step(
                        x[idx], tokens[a], cfg, denoiser, codec, schedule, eps=eps
                    )
                    edit_terms.append(ops.mse(classifier.logits(x_hat), target))
                    rec_terms.append(ops.mse(z0_hat, z0))
                edit_loss = ops.mul(ops.sum(ops.concat([ops.reshape(t, (1,)) for t in edit_terms])), 1.0 / K)
                rec_loss = ops.mul(ops.sum(ops.concat([ops.reshape(t, (1,)) for t in rec_terms])), 1.0 / K)
                loss = ops.add(edit_loss, ops.mul(rec_loss, cfg.gamma))
            if not np.isfinite(loss.item()):
                raise DivergenceError("learn_embeddings", it, loss.item())
            zero_grad(tokens)
            tape.backward(loss, wrt=tokens)
            for model in models:
                if any(p.requires_grad for p in model.parameters()):
                    raise AssertionError(f"{model.kind} parameters were unfrozen during embedding training")
            adamw_step(tokens, state)
            rows.append((it, edit_loss.item(), rec_loss.item(), loss.item()))

    _assert_unchanged(before, models)
    learned = [SemanticEmbedding(a, t.data.copy(), attribute) for a, t in enumerate(tokens)]
    history = pd.DataFrame(rows, columns=["iteration", "edit_loss", "rec_loss", "combined_loss"])
    history["iteration"] = history["iteration"].astype(int)

    success = float("nan")
    if heldout is not None:
        held_x, held_y = heldout
        targets = (np.asarray(held_y, dtype=int) + 1) % K
        edited = edit_towards(held_x, learned, targets, cfg, denoiser, codec, schedule)
        success = edit_success_rate(judge or classifier, edited, targets)

    report = EmbeddingTrainReport(history=history, edit_success=success, wall_clock=time.perf_counter() - started)
    if rows:
        logger.info(
            f"Embeddings trained at L={L}: {iters} iterations, combined loss "
            f"{rows[0][3]:.4f} -> {rows[-1][3]:.4f}, held-out edit success {success:.3f}"
        )
    return learned, report
