from dataclasses import replace

import numpy as np
import pytest

from src.autodiff import Tensor, adamw_step, ops
from src.autodiff.gradcheck import check_gradients
from src.caso import (
    EditConfig,
    SemanticEmbedding,
    concat_embeddings,
    edit,
    edit_single_step,
    edit_verdicts,
    generate_single_step,
    init_embeddings,
    interpolate_scale,
    learn_embeddings,
    load_embeddings,
    outside_region_mse,
    save_embeddings,
)
from src.diffusion.schedule import make_schedule
from src.errors import DivergenceError, ShapeError
from src.models import ClassifierConfig, ClassifierModel, Codec, CodecConfig, DenoiserConfig, DenoiserModel

S = make_schedule(100, 1e-4, 0.02)
DIM, COND = 6, 5


@pytest.fixture(scope="module")
def models():
    denoiser = DenoiserModel(
        DenoiserConfig(data_dim=DIM, n_classes=2, hidden=16, n_blocks=2, time_dim=8, condition_dim=COND, T=S.T),
        seed=0,
    )
    # untrained label rows are zero; give them structure so conditions matter
    denoiser.params["label_embedding"].data[:] = np.random.default_rng(1).standard_normal((2, COND))
    classifier = ClassifierModel(ClassifierConfig(DIM, 2, hidden=8, feature_dim=4), seed=0)
    codec = Codec(CodecConfig(input_dim=DIM))
    return denoiser, classifier, codec


@pytest.fixture()
def images():
    return np.random.default_rng(2).random((8, DIM))


def _embedding(seed, class_id=0, n_tokens=3, attribute="stripe"):
    return SemanticEmbedding(class_id, np.random.default_rng(seed).standard_normal((n_tokens, COND)), attribute)


CFG = EditConfig(scale=4.0, L_frac=0.5, steps=10, seed=3, n_tokens=2, lr=1e-2)


# ============================================================================
# Types
# ============================================================================

def test_embedding_validation():
    with pytest.raises(ValueError, match="non-finite"):
        SemanticEmbedding(0, np.array([[np.nan, 0.0]]))
    with pytest.raises(ShapeError):
        SemanticEmbedding(0, np.zeros((0, 3)))


@pytest.mark.parametrize("bad", [dict(L_frac=0.0), dict(L_frac=1.5), dict(gamma=-1.0), dict(steps=0), dict(scale=np.inf)])
def test_edit_config_validation(bad):
    with pytest.raises(ValueError):
        EditConfig(**bad)


def test_edit_steps_follow_depth():
    assert EditConfig(steps=50, L_frac=0.4).edit_steps == 20, "0.4 of a 50-step trajectory is 20 steps"
    assert EditConfig(steps=2, L_frac=0.1).edit_steps == 1, "at least one step"


def test_concat_singleton_and_width_mismatch():
    e = _embedding(0)
    single = concat_embeddings([e])
    assert single.class_id == e.class_id and np.array_equal(single.tokens, e.tokens), "concat([e]) must equal e"
    with pytest.raises(ShapeError):
        concat_embeddings([e, SemanticEmbedding(1, np.zeros((2, COND + 1)))])
    both = concat_embeddings([e, _embedding(1, class_id=1, attribute="shape")])
    assert both.class_id == (0, 1) and both.n_tokens == 6, "concat stacks tokens and composes class ids"


# ============================================================================
# Editing
# ============================================================================

def test_scale_zero_is_reconstruction(models, images):
    denoiser, _, codec = models
    cfg = replace(CFG, scale=0.0)
    recon = edit(images, None, cfg, denoiser, codec, S)
    assert np.array_equal(edit(images, _embedding(0), cfg, denoiser, codec, S), recon), "scale 0 ignores the embedding"
    assert np.array_equal(edit(images, _embedding(9), cfg, denoiser, codec, S), recon), "any embedding at scale 0"
    assert np.array_equal(edit_single_step(images, _embedding(0), cfg, denoiser, codec, S), recon), \
        "single-step and multi-step agree at scale 0"


def test_edit_is_deterministic_and_uses_the_embedding(models, images):
    denoiser, _, codec = models
    e = _embedding(4)
    first = edit(images, e, CFG, denoiser, codec, S)
    assert first.shape == images.shape, "edit must return the input's shape"
    assert np.array_equal(first, edit(images, e, CFG, denoiser, codec, S)), "edits must be deterministic"
    assert not np.array_equal(first, edit(images, None, CFG, denoiser, codec, S)), "guidance must change the output"


def test_single_step_equals_edit_when_one_step_is_in_window(models, images):
    denoiser, _, codec = models
    # L = 50, steps at 50, 40, ..., 10; only t = 50 lies in [45, 50]
    cfg = replace(CFG, window=(0.5, 0.45))
    e = _embedding(5)
    assert np.array_equal(
        edit_single_step(images, e, cfg, denoiser, codec, S), edit(images, e, cfg, denoiser, codec, S)
    ), "one guided step either way"


def test_concatenation_order_is_irrelevant(models, images):
    denoiser, _, codec = models
    a, b = _embedding(6, attribute="stripe"), _embedding(7, class_id=1, attribute="shape")
    ab = edit(images, concat_embeddings([a, b]), CFG, denoiser, codec, S)
    ba = edit(images, concat_embeddings([b, a]), CFG, denoiser, codec, S)
    assert np.array_equal(ab, ba), "permuted concatenation must give bit-identical edits"


def test_interpolate_scale_reuses_inversion(models, images):
    denoiser, _, codec = models
    e = _embedding(8)
    outs = interpolate_scale(images, e, [-2.0, 0.0, 3.0], CFG, denoiser, codec, S)
    assert len(outs) == 3, "one output per scale"
    for lam, out in zip([-2.0, 0.0, 3.0], outs):
        assert np.array_equal(out, edit(images, e, replace(CFG, scale=lam), denoiser, codec, S)), f"scale {lam}"
    (only,) = interpolate_scale(images, e, [0.0], CFG, denoiser, codec, S)
    assert np.array_equal(only, edit(images, None, CFG, denoiser, codec, S)), "[0] is a reconstruction"
    with pytest.raises(ValueError):
        interpolate_scale(images, e, [np.nan], CFG, denoiser, codec, S)


def test_condition_gradient_through_single_step_generator(models, images):
    denoiser, classifier, codec = models
    tokens = Tensor(_embedding(10).tokens, requires_grad=True)
    eps = np.random.default_rng(11).standard_normal(images.shape)
    target = Tensor(np.tile([0.0, 1.0], (len(images), 1)))

    def loss_fn():
        x_hat, z0_hat, z0 = generate_single_step(images, tokens, CFG, denoiser, codec, S, eps=eps)
        return ops.add(ops.mse(classifier.logits(x_hat), target), ops.mul(ops.mse(z0_hat, z0), 0.1))

    with denoiser.frozen(), classifier.frozen():
        err = check_gradients(loss_fn, [tokens])
    assert err < 1e-4, f"embedding gradient relative error {err:.2e}"


# ============================================================================
# Embedding training
# ============================================================================

def test_zero_iterations_return_initialisation(models, images):
    denoiser, classifier, codec = models
    learned, report = learn_embeddings(images, np.arange(8) % 2, denoiser, classifier, codec, S, CFG, iters=0, batch=4)
    init = init_embeddings(denoiser.null_embedding.data, 2, CFG.n_tokens, seed=CFG.seed)
    assert all(np.array_equal(a.tokens, b.tokens) for a, b in zip(learned, init)), "iters=0 keeps the initial tokens"
    assert len(report.history) == 0, "no iterations recorded"


def test_training_bookkeeping_freeze_and_determinism(models, images):
    denoiser, classifier, codec = models
    before = [m.state_dict() for m in models]
    labels = np.arange(8) % 2
    first, report = learn_embeddings(images, labels, denoiser, classifier, codec, S, CFG, iters=5, batch=4,
                                     heldout=(images, labels), attribute="stripe")
    second, _ = learn_embeddings(images, labels, denoiser, classifier, codec, S, CFG, iters=5, batch=4)

    h = report.history
    assert list(h.columns) == ["iteration", "edit_loss", "rec_loss", "combined_loss"], "history columns"
    gap = np.abs(h["combined_loss"] - (h["edit_loss"] + CFG.gamma * h["rec_loss"])).max()
    assert gap <= 1e-12, f"combined loss drifts from edit + gamma * rec by {gap:.1e}"
    for state, model in zip(before, models):
        assert all(np.array_equal(state[k], v) for k, v in model.state_dict().items()), f"{model.kind} changed"
        assert all(p.requires_grad for p in model.parameters()), f"{model.kind} left frozen"
    assert all(np.array_equal(a.tokens, b.tokens) for a, b in zip(first, second)), "training must be deterministic"
    assert 0.0 <= report.edit_success <= 1.0, "held-out success is a rate"
    assert all(e.attribute == "stripe" for e in first), "attribute recorded on every embedding"


def test_batch_larger_than_dataset(models, images):
    denoiser, classifier, codec = models
    with pytest.raises(ValueError, match="batch"):
        learn_embeddings(images, np.zeros(8, dtype=int), denoiser, classifier, codec, S, CFG, iters=1, batch=9)


def test_divergence_reports_iteration(models, images, monkeypatch):
    denoiser, classifier, codec = models
    real_step = adamw_step

    def step_then_poison(params, state):
        real_step(params, state)
        if state.step == 3:
            params[0].data[:] = np.nan

    monkeypatch.setattr("src.caso.training.adamw_step", step_then_poison)
    with pytest.raises(DivergenceError) as info:
        learn_embeddings(images, np.arange(8) % 2, denoiser, classifier, codec, S, CFG, iters=6, batch=4)
    assert info.value.index == 3, f"the first non-finite loss is at iteration 3, got {info.value.index}"
    assert "learn_embeddings" in str(info.value), "the error names the loop that diverged"
    assert all(p.requires_grad for m in models for p in m.parameters()), "models are unfrozen after a failure"


# ============================================================================
# Scoring and persistence
# ============================================================================

def test_verdicts_at_scale_zero_are_reconstructions(models, images):
    _, classifier, _ = models
    frame = edit_verdicts(classifier, images, images, np.zeros(8, dtype=int), np.ones(8, dtype=int), 0.0)
    assert set(frame["verdict"]) == {"reconstruction"}, "scale 0 edits are reconstructions"
    frame = edit_verdicts(classifier, images, images, np.zeros(8, dtype=int), frame["predicted_after"], 5.0)
    assert set(frame["verdict"]) == {"success"}, "predicted targets must count as successes"


def test_outside_region_mse_ignores_the_region():
    source = np.zeros((2, 3, 3))
    edited = source.copy()
    edited[:, 0, :] = 1.0
    region = np.zeros((2, 3, 3), dtype=bool)
    region[:, 0, :] = True
    assert np.array_equal(outside_region_mse(source, edited, region), [0.0, 0.0]), "changes inside the region are free"
    assert np.allclose(outside_region_mse(source, edited, ~region), 1.0), "changes outside the region count"


def test_embedding_persistence(tmp_path):
    learned = [_embedding(0, class_id=0), _embedding(1, class_id=1)]
    save_embeddings(learned, tmp_path / "stripe", scale=10.0)
    loaded = load_embeddings(tmp_path / "stripe")
    assert [e.class_id for e in loaded] == [0, 1], "class ids must survive"
    assert all(np.array_equal(a.tokens, b.tokens) for a, b in zip(learned, loaded)), "tokens must be exact"
    assert loaded[0].attribute == "stripe", "attribute must survive"
