import numpy as np
import pytest

from src.autodiff import Tensor, ops
from src.autodiff.gradcheck import check_gradients
from src.autodiff.optim import OptimizerState
from src.diffusion.schedule import make_schedule
from src.errors import ContainerFormatError, DivergenceError, ShapeError
from src.models import (
    ClassifierModel,
    Codec,
    CodecConfig,
    DenoiserConfig,
    DenoiserModel,
    train_classifier,
    train_codec,
    train_denoiser,
)
from src.models.classifier import ClassifierConfig
from src.models.common import fit

S = make_schedule(100, 1e-4, 0.02)


def _small_denoiser(seed=0, n_classes=2):
    return DenoiserModel(
        DenoiserConfig(data_dim=6, n_classes=n_classes, hidden=16, n_blocks=2, time_dim=8, condition_dim=5, T=S.T),
        seed=seed,
    )


def _blobs(n=200, dim=6, seed=0, gap=4.0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    x = rng.standard_normal((n, dim)) + gap * (labels[:, None] - 0.5)
    return x, labels


# ============================================================================
# Denoiser
# ============================================================================

def test_denoiser_output_shape_and_null_branch():
    model = _small_denoiser()
    rng = np.random.default_rng(0)
    z = rng.standard_normal((4, 6))
    out = model(z, 30, None)
    assert out.shape == z.shape, "prediction must have the latent's shape"
    explicit = model(z, 30, model.null_embedding)
    assert np.array_equal(out.data, explicit.data), "no condition must equal the null embedding"


def test_denoiser_rejects_bad_condition_width():
    model = _small_denoiser()
    with pytest.raises(ShapeError, match="width"):
        model(np.zeros((2, 6)), 10, Tensor(np.zeros((3, 4))))


def test_denoiser_rejects_bad_inputs():
    model = _small_denoiser()
    with pytest.raises(ShapeError):
        model(np.zeros((2, 5)), 10)
    with pytest.raises(ValueError):
        model(np.zeros((2, 6)), S.T + 1)


def test_denoiser_gradient_wrt_condition():
    model = _small_denoiser(seed=3)
    rng = np.random.default_rng(3)
    z = Tensor(rng.standard_normal((3, 6)))
    w = Tensor(rng.standard_normal((3, 6)))
    c = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    with model.frozen():
        err = check_gradients(lambda: ops.sum(ops.mul(model(z, 40, c), w)), [c])
    assert err < 1e-4, f"condition gradient relative error {err:.2e}"


def test_condition_token_order_is_irrelevant():
    model = _small_denoiser(seed=1)
    rng = np.random.default_rng(1)
    z = rng.standard_normal((2, 6))
    tokens = rng.standard_normal((6, 5))
    a = model(z, 20, Tensor(tokens)).data
    b = model(z, 20, Tensor(tokens[::-1].copy())).data
    assert np.array_equal(a, b), "permuting condition tokens must give bit-identical output"


def test_zero_condition_projection_ignores_the_label():
    model = _small_denoiser(seed=2, n_classes=3)
    rng = np.random.default_rng(2)
    model.params["label_embedding"].data[:] = rng.standard_normal((3, 5))
    z = rng.standard_normal((4, 6))
    before = [model(z, 30, model.class_condition(k)).data for k in range(3)]
    assert not np.array_equal(before[0], before[1]), "distinct label rows must change the output"

    model.params["cond.weight"].data[:] = 0.0
    model.params["cond.bias"].data[:] = 0.0
    null = model(z, 30).data
    for k in range(3):
        out = model(z, 30, model.class_condition(k)).data
        assert np.array_equal(out, null), f"class {k} output depends on the label once the projection is zero"


def test_train_denoiser_zero_epochs_keeps_initialisation():
    rng = np.random.default_rng(0)
    latents, labels = rng.standard_normal((16, 6)), np.arange(16) % 2
    config = _small_denoiser().config
    result = train_denoiser(latents, labels, S, config, epochs=0, seed=4)
    fresh = DenoiserModel(config, seed=4).state_dict()
    trained = result.model.state_dict()
    assert all(np.array_equal(fresh[k], trained[k]) for k in fresh), "epochs=0 must not change parameters"
    assert len(result.history) == 0, "no epochs, no history"


def test_full_condition_dropout_makes_labels_irrelevant():
    rng = np.random.default_rng(1)
    latents, labels = rng.standard_normal((32, 6)), np.arange(32) % 2
    result = train_denoiser(latents, labels, S, _small_denoiser().config, drop_prob=1.0, epochs=3, batch=8)
    model = result.model
    z = rng.standard_normal((4, 6))
    a = model(z, 50, model.class_condition(0)).data
    b = model(z, 50, model.class_condition(1)).data
    assert np.array_equal(a, b), "with drop_prob=1 the label embedding never trains"


def test_train_denoiser_is_reproducible():
    rng = np.random.default_rng(2)
    latents, labels = rng.standard_normal((24, 6)), np.arange(24) % 2
    config = _small_denoiser().config
    first = train_denoiser(latents, labels, S, config, epochs=2, batch=8, seed=7).model.state_dict()
    second = train_denoiser(latents, labels, S, config, epochs=2, batch=8, seed=7).model.state_dict()
    assert all(np.array_equal(first[k], second[k]) for k in first), "same seed must give identical parameters"


def test_train_denoiser_validates_inputs():
    config = _small_denoiser().config
    with pytest.raises(ValueError):
        train_denoiser(np.zeros((0, 6)), np.zeros(0, dtype=int), S, config)
    with pytest.raises(ValueError):
        train_denoiser(np.zeros((4, 6)), np.zeros(4, dtype=int), S, config, drop_prob=1.5)
    with pytest.raises(ValueError, match="does not match"):
        train_denoiser(np.zeros((4, 6)), np.zeros(4, dtype=int), make_schedule(10, 1e-4, 0.02), config)


def test_fit_reports_divergence_epoch():
    p = Tensor(np.ones(2), requires_grad=True)
    state = OptimizerState.for_params([p])
    with pytest.raises(DivergenceError) as info:
        fit([p], lambda idx, rng: Tensor(np.nan), 4, 1, 2, np.random.default_rng(0), state, "toy")
    assert info.value.index == 0, "divergence must name the epoch"


# ============================================================================
# Classifier
# ============================================================================

def test_logits_decompose_into_head_and_features():
    model = ClassifierModel(ClassifierConfig(6, 3, hidden=10, feature_dim=4), seed=2)
    x = np.random.default_rng(2).standard_normal((5, 6))
    h = model.features(x).data
    assert model.weight.shape == (3, 4), "W has one row per class"
    assert np.max(np.abs(model.logits(x).data - (h @ model.weight.T + model.bias))) <= 1e-12, \
        "logits must equal W h + b"
    assert np.array_equal(h, model.features(x).data), "features must be deterministic"


def test_zero_input_features_follow_bias_path():
    model = ClassifierModel(ClassifierConfig(3, 2, hidden=4, feature_dim=2), seed=5)
    p = model.params
    b1, w2, b2 = p["fc1.bias"].data, p["fc2.weight"].data, p["fc2.bias"].data
    expected = [
        np.tanh(sum(np.tanh(b1[k]) * w2[k, j] for k in range(4)) + b2[j]) for j in range(2)
    ]
    assert np.allclose(model.features(np.zeros((1, 3))).data[0], expected, atol=1e-12), \
        "zero input must give tanh(tanh(b1) W2 + b2)"


def test_classifier_rejects_wrong_width():
    model = ClassifierModel(ClassifierConfig(6, 2), seed=0)
    with pytest.raises(ShapeError):
        model.features(np.zeros((2, 5)))


def test_separable_data_reaches_full_accuracy():
    x, y = _blobs(gap=8.0)
    result = train_classifier(x, y, epochs=60, batch=32, seed=0, hidden=16, feature_dim=8)
    assert result.history["accuracy"].iloc[-1] == 1.0, "separable blobs must be fit perfectly"
    assert list(result.history.columns) == ["epoch", "loss", "accuracy"], "history columns"


def test_untrained_classifier_is_at_chance():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((400, 6))
    y = rng.integers(0, 2, size=400)
    result = train_classifier(x, y, epochs=0, n_classes=2)
    acc = result.model.accuracy(x, y)
    assert abs(acc - 0.5) < 0.1, f"untrained accuracy {acc:.3f} too far from chance"


def test_single_class_is_rejected():
    with pytest.raises(ValueError, match="two classes"):
        train_classifier(np.zeros((4, 3)), np.zeros(4, dtype=int))


# ============================================================================
# Codec
# ============================================================================

def test_identity_codec_round_trip_is_exact():
    codec = Codec(CodecConfig(input_dim=5))
    x = np.random.default_rng(0).random((3, 5))
    assert np.array_equal(codec.decode(codec.encode(x)).data, x), "identity codec must be exact"
    assert len(codec.parameters()) == 0, "identity codec has no parameters"


def test_learned_codec_shapes():
    codec = Codec(CodecConfig(input_dim=8, latent_dim=3, hidden=6, variant="learned"), seed=1)
    x = np.random.default_rng(1).random((4, 8))
    z = codec.encode(x)
    assert z.shape == (4, 3), "encoder output must have latent_dim columns"
    assert codec.decode(z).shape == x.shape, "decoder output must have the input's shape"
    with pytest.raises(ShapeError):
        codec.decode(np.zeros((4, 8)))


def test_learned_codec_training_reduces_loss():
    x = np.random.default_rng(2).random((64, 8)) * 0.2 + 0.4
    result = train_codec(x, CodecConfig(8, 4, 16, "learned"), epochs=20, batch=16, seed=0)
    losses = result.history["loss"].to_numpy()
    assert losses[-1] < losses[0], "codec reconstruction loss should fall"


def test_unknown_codec_variant():
    with pytest.raises(ValueError):
        CodecConfig(input_dim=4, variant="vae")


# ============================================================================
# Persistence
# ============================================================================

def test_network_save_load_round_trip(tmp_path):
    model = _small_denoiser(seed=6)
    model.save(tmp_path / "denoiser", note="smoke")
    loaded = DenoiserModel.load(tmp_path / "denoiser")
    assert loaded.config == model.config, "architecture must survive persistence"
    state = model.state_dict()
    assert all(np.array_equal(state[k], v) for k, v in loaded.state_dict().items()), "parameters must be exact"


def test_loading_the_wrong_kind_fails(tmp_path):
    ClassifierModel(ClassifierConfig(4, 2), seed=0).save(tmp_path / "clf")
    with pytest.raises(ContainerFormatError, match="denoiser"):
        DenoiserModel.load(tmp_path / "clf")
