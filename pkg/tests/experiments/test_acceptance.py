"""End-to-end measurements on the shapes pipeline (slow; run with `pytest -m slow`)."""

import numpy as np
import pytest

from src.collapse import collapse_report
from src.io.storage import read_yaml
from src.models import CodecConfig, train_classifier, train_codec
from src.synthdata import gen_gmm, gen_shapes

pytestmark = pytest.mark.slow


# ============================================================================
# Trained models
# ============================================================================

def test_denoiser_learns(base_run):
    _, manifests = base_run
    m = manifests["train-denoiser"]["metrics"]
    assert m["final_loss"] < 0.5 * m["first_loss"], f"denoiser loss should halve: {m}"


def test_unguided_round_trip(base_run):
    _, manifests = base_run
    err = manifests["train-denoiser"]["metrics"]["roundtrip_rel_error"]
    assert err["edit_depth"] < 5e-2, f"invert + sample should reconstruct held-out images: {err}"


def test_classifiers_generalise(base_run):
    _, manifests = base_run
    for attribute, m in manifests["train-classifier"]["metrics"].items():
        assert m["heldout_accuracy"] > 0.95, f"{attribute} classifier held-out accuracy {m['heldout_accuracy']}"


def test_embedding_edits_succeed_during_training(base_run):
    _, manifests = base_run
    for attribute, m in manifests["learn-embedding"]["metrics"].items():
        assert m["edit_success"] >= 0.9, f"{attribute} held-out success after learning: {m['edit_success']}"


def test_learned_codec_reconstructs():
    data = gen_shapes(200, seed=0).flat
    result = train_codec(data, CodecConfig(data.shape[1], variant="learned"), epochs=300, batch=64, seed=0)
    assert result.history["loss"].iloc[-1] < 0.01, "learned codec reconstruction MSE"


# ============================================================================
# Editing
# ============================================================================

def test_multi_step_edit_success_and_locality(edit_run):
    m = edit_run("multi", mode="multi", attribute="stripe")["metrics"]
    assert m["success_rate"] >= 0.9, f"stripe edits toward the opposite class: {m['success_rate']}"
    assert m["mean_outside_mse"] < 0.02, f"pixels outside the stripe band should stay put: {m['mean_outside_mse']}"
    assert m["shape_preserved_rate"] >= 0.85, f"shape verdict must survive stripe edits: {m}"


def test_shape_edits(edit_run):
    m = edit_run("multi_shape", mode="multi", attribute="shape")["metrics"]
    assert m["success_rate"] >= 0.9, f"shape edits toward the opposite class: {m['success_rate']}"
    assert m["stripe_preserved_rate"] >= 0.85, f"stripe verdict must survive shape edits: {m}"


def test_single_step_agrees_with_multi_step(edit_run):
    m = edit_run("single", mode="single", attribute="stripe")["metrics"]
    assert m["agreement_with_multi"] >= 0.9, f"single-step and full edits disagree: {m['agreement_with_multi']}"


def test_interpolation_is_monotone_and_bidirectional(edit_run):
    m = edit_run("interpolate", mode="interpolate", attribute="stripe")["metrics"]
    assert m["spearman"] >= 0.9, f"target logit should rise with the scale: {m['mean_target_logit']}"
    assert m["flip_rate_at_min_scale"] >= 0.7, f"negative scales push away from the class: {m}"


def test_multi_attribute_edits(edit_run):
    m = edit_run("multi_attribute", mode="multi_attribute")["metrics"]
    assert m["order_invariant"], "permuted concatenation must give bit-identical edits"
    assert m["stripe_success_rate"] >= 0.8 and m["shape_success_rate"] >= 0.8, f"dual-attribute edits: {m}"


def test_own_class_guidance_improves_reconstruction(edit_run):
    m = edit_run("own", mode="multi", attribute="stripe", targets="own", scale=3.0)["metrics"]
    assert m["guided_closer_rate"] >= 0.7, f"own-class guidance should beat plain reconstruction: {m}"


def test_reconstruction_weight_trades_off_success(base_run, inputs, stage_runner, tmp_path_factory):
    _, manifests = base_run
    baseline = manifests["learn-embedding"]["metrics"]["stripe"]["edit_success"]
    out = tmp_path_factory.mktemp("gamma")
    heavy = stage_runner(
        out,
        "learn-embedding",
        {"inputs": {k: v for k, v in inputs.items() if k != "embeddings"},
         "embedding": {"attributes": ["stripe"], "gamma": 100.0}},
    )["metrics"]["stripe"]["edit_success"]
    assert heavy < baseline, f"a dominant reconstruction term should cost edit success: {heavy} vs {baseline}"


# ============================================================================
# Diagnostics
# ============================================================================

def test_neural_collapse_on_separable_mixture():
    data = gen_gmm(400, K=2, dim=2, separation=10.0, seed=0)
    model = train_classifier(data.points, data.labels, epochs=300, batch=64, seed=0).model
    report = collapse_report(model, data.points, data.labels)
    assert report.accuracy >= 0.995, f"separable data must be fit: {report.accuracy}"
    assert report.collapse_ratio < 0.1, f"within-class spread should collapse: {report.collapse_ratio}"
    assert report.wa_mu_cos.min() > 0.95, f"head rows should align with class means: {report.wa_mu_cos}"
    assert abs(report.etf_cos[0, 1] + 1.0) <= 0.05, "two class means form the K=2 ETF"
    assert report.decomposition_error <= 1e-8, "Sigma_T == Sigma_B + Sigma_W"


def test_generated_images_keep_collapse_geometry(diagnose_run):
    stage, manifest = diagnose_run
    for attribute in ("stripe", "shape"):
        aligned = read_yaml(stage / f"generated_alignment_{attribute}.yaml")
        assert min(aligned["cosines"]) > 0.9, f"{attribute}: w_a vs generated means {aligned['cosines']}"
        assert aligned["residual"] < 0.3, f"{attribute}: beta-fit residual {aligned['residual']}"


def test_jensen_gap_components(diagnose_run):
    stage, manifest = diagnose_run
    est = read_yaml(stage / "jensen.yaml")
    assert est["bound"] == est["prefactor"] * est["grad_norm_max"] * est["Q_mc"], "bound is its parts' product"
    assert manifest["metrics"]["jensen"]["Q_increases_with_L"], "posterior gap grows with the noise level"
    assert np.isfinite(est["bound"]), "finite bound"
