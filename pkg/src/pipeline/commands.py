"""
Experiment commands behind the CLI verbs.

Each command reads its inputs from earlier stages (verified against their
manifests), writes its outputs to `<out_dir>/<stage>/` and finishes by
writing that stage's manifest. Commands return the manifest so callers can
inspect the metrics.

    gen-data          -> data/
    train-denoiser    -> denoiser/   (codec + denoiser)
    train-classifier  -> classifier/ (one classifier per attribute)
    learn-embedding   -> embeddings/ (one embedding set per attribute)
    edit              -> edit/
    diagnose          -> diagnose/
"""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from src.caso.editing import (
    edit,
    edit_towards,
    edit_verdicts,
    interpolate_scale,
    outside_region_mse,
    reconstruction_mse,
)
from src.caso.embedding import concat_embeddings, save_embeddings
from src.caso.training import learn_embeddings
from src.collapse.diagnostics import (
    collapse_report,
    features_frame,
    make_generator,
    generated_alignment,
)
from src.collapse.jensen import jensen_gap_bound, jensen_sweep
from src.config.loader import RunConfig
from src.io.storage import write_pgm, write_yaml
from src.models.classifier import train_classifier
from src.models.codec import CodecConfig, train_codec
from src.models.denoiser import DenoiserConfig, train_denoiser
from src.pipeline.common import (
    attribute_labels,
    balanced_indices,
    classifier_attributes,
    dataset_fingerprint,
    edit_config_from,
    has_artifact,
    load_attribute_embeddings,
    load_classifier,
    load_codec,
    load_data,
    load_denoiser,
    schedule_from,
    start_stage,
)
from src.synthdata.gmm import gen_gmm
from src.synthdata.shapes import ShapesDataset, gen_shapes
from src.synthdata.store import save_gmm, save_shapes, split_indices
from src.utils.provenance import RunManifest
from src.visualization.plots import (
    make_grid,
    plot_interpolation,
    plot_jensen_sweep,
    plot_loss_curves,
    save_figure,
)

logger = logging.getLogger(__name__)


def _require_shapes(dataset, command: str) -> ShapesDataset:
    if not isinstance(dataset, ShapesDataset):
        raise ValueError(f"{command} needs the shapes dataset (data.kind: shapes)")
    return dataset


# ============================================================================
# gen-data
# ============================================================================

def cmd_gen_data(cfg: RunConfig) -> RunManifest:
    manifest = start_stage(cfg, "gen-data", "data")
    d = cfg.section("data")
    out = manifest.stage_dir
    if d["kind"] == "shapes":
        dataset = gen_shapes(int(d["n"]), seed=cfg.seed)
        save_shapes(dataset, out)
        manifest.add_artifact(out / "labels.csv")
        counts = pd.Series(dataset.combo).value_counts().sort_index()
    elif d["kind"] == "gmm":
        g = d["gmm"]
        dataset = gen_gmm(int(d["n"]), int(g["K"]), int(g["dim"]), float(g["separation"]), seed=cfg.seed)
        save_gmm(dataset, out)
        manifest.add_artifact(out / "points.csv")
        counts = pd.Series(dataset.labels).value_counts().sort_index()
    else:
        raise ValueError(f"unknown data.kind {d['kind']!r}; expected shapes or gmm")

    train_idx, held_idx = split_indices(dataset, float(d["train_frac"]), seed=cfg.seed)
    part = np.full(len(dataset), "heldout", dtype=object)
    part[np.asarray(train_idx, dtype=int)] = "train"
    pd.DataFrame({"index": np.arange(len(dataset)), "part": part}).to_csv(out / "split.csv", index=False)
    manifest.add_artifacts(out / "dataset.bin", out / "split.csv")

    manifest.metrics = {
        "n": len(dataset),
        "n_train": len(train_idx),
        "n_heldout": len(held_idx),
        "class_counts": {int(k): int(v) for k, v in counts.items()},
    }
    manifest.write()
    return manifest


# ============================================================================
# train-denoiser
# ============================================================================

def cmd_train_denoiser(cfg: RunConfig) -> RunManifest:
    manifest = start_stage(cfg, "train-denoiser", "denoiser")
    _, train, heldout = load_data(cfg, manifest)
    schedule = schedule_from(cfg)
    c, dn = cfg.section("codec"), cfg.section("denoiser")
    out = manifest.stage_dir

    x = train.flat
    codec_result = train_codec(
        x,
        CodecConfig(x.shape[1], int(c["latent_dim"]), int(c["hidden"]), c["variant"]),
        epochs=int(c["epochs"]),
        batch=int(c["batch"]),
        seed=cfg.seed,
        lr=float(c["lr"]),
    )
    codec = codec_result.codec
    latents = codec.encode(x).data
    labels = attribute_labels(train, dn["label"])
    config = DenoiserConfig(
        data_dim=codec.latent_dim,
        n_classes=int(labels.max()) + 1,
        hidden=int(dn["hidden"]),
        n_blocks=int(dn["n_blocks"]),
        time_dim=int(dn["time_dim"]),
        condition_dim=int(dn["condition_dim"]),
        T=schedule.T,
    )
    result = train_denoiser(
        latents,
        labels,
        schedule,
        config,
        drop_prob=float(dn["drop_prob"]),
        epochs=int(dn["epochs"]),
        batch=int(dn["batch"]),
        seed=cfg.seed,
        lr=float(dn["lr"]),
    )
    denoiser = result.model

    sidecar = {
        "schedule": schedule.as_dict(),
        "dataset_sha256": dataset_fingerprint(cfg),
        "label": dn["label"],
        "drop_prob": float(dn["drop_prob"]),
    }
    manifest.add_artifacts(*codec.save(out / "codec", **sidecar), *denoiser.save(out / "denoiser", **sidecar))
    result.history.to_csv(out / "loss.csv", index=False)
    manifest.add_artifact(out / "loss.csv")
    if len(codec_result.history):
        codec_result.history.to_csv(out / "codec_loss.csv", index=False)
        manifest.add_artifact(out / "codec_loss.csv")
    manifest.add_artifact(
        save_figure(plot_loss_curves(result.history, "epoch", ["loss"], title="denoiser"), out / "loss.png")
    )

    # Unguided invert/sample round trip on held-out images, at the edit depth and at full depth
    n = min(int(cfg.section("edit")["n_images"]), len(heldout))
    probe = heldout.flat[:n]
    roundtrip = {}
    for name, L_frac in (("edit_depth", float(cfg.section("edit")["L_frac"])), ("full_depth", 1.0)):
        recon = edit(probe, None, edit_config_from(cfg, scale=0.0, L_frac=L_frac), denoiser, codec, schedule)
        rel = np.linalg.norm(recon - probe, axis=1) / np.maximum(np.linalg.norm(probe, axis=1), 1e-12)
        roundtrip[name] = float(rel.mean())
    logger.info(f"Round-trip relative error: {roundtrip}")

    manifest.metrics = {
        "first_loss": float(result.history["loss"].iloc[0]) if len(result.history) else None,
        "final_loss": float(result.history["loss"].iloc[-1]) if len(result.history) else None,
        "codec_final_loss": (
            float(codec_result.history["loss"].iloc[-1]) if len(codec_result.history) else None
        ),
        "roundtrip_rel_error": roundtrip,
        "n_parameters": denoiser.manifest()["n_parameters"],
    }
    manifest.write()
    return manifest


# ============================================================================
# train-classifier
# ============================================================================

def cmd_train_classifier(cfg: RunConfig) -> RunManifest:
    manifest = start_stage(cfg, "train-classifier", "classifier")
    dataset, train, heldout = load_data(cfg, manifest)
    c = cfg.section("classifier")
    out = manifest.stage_dir
    fingerprint = dataset_fingerprint(cfg)

    for attribute in classifier_attributes(cfg, dataset):
        y = attribute_labels(train, attribute)
        result = train_classifier(
            train.flat,
            y,
            epochs=int(c["epochs"]),
            batch=int(c["batch"]),
            seed=cfg.seed,
            n_classes=int(attribute_labels(dataset, attribute).max()) + 1,
            hidden=int(c["hidden"]),
            feature_dim=int(c["feature_dim"]),
            lr=float(c["lr"]),
            weight_decay=float(c["weight_decay"]),
        )
        model = result.model
        manifest.add_artifacts(*model.save(out / attribute, attribute=attribute, dataset_sha256=fingerprint))
        result.history.to_csv(out / f"{attribute}_accuracy.csv", index=False)
        manifest.add_artifact(out / f"{attribute}_accuracy.csv")

        held_acc = model.accuracy(heldout.flat, attribute_labels(heldout, attribute))
        manifest.metrics[attribute] = {
            "train_accuracy": float(result.history["accuracy"].iloc[-1]) if len(result.history) else None,
            "heldout_accuracy": held_acc,
            "final_loss": float(result.history["loss"].iloc[-1]) if len(result.history) else None,
        }
        logger.info(f"Classifier {attribute}: held-out accuracy {held_acc:.3f}")
    manifest.write()
    return manifest


# ============================================================================
# learn-embedding
# ============================================================================

def cmd_learn_embedding(cfg: RunConfig) -> RunManifest:
    manifest = start_stage(cfg, "learn-embedding", "embeddings")
    _, train, heldout = load_data(cfg, manifest)
    train = _require_shapes(train, "learn-embedding")
    schedule = schedule_from(cfg)
    codec = load_codec(cfg, manifest)
    denoiser = load_denoiser(cfg, manifest)
    emb = cfg.section("embedding")
    ecfg = edit_config_from(cfg)
    out = manifest.stage_dir
    n_train = len(train) if emb.get("n_train") is None else min(int(emb["n_train"]), len(train))
    n_eval = min(int(cfg.section("edit")["n_images"]), len(heldout))

    for attribute in emb["attributes"]:
        classifier = load_classifier(cfg, attribute, manifest)
        judge = None
        if emb.get("judge_seed") is not None:
            c = cfg.section("classifier")
            judge = train_classifier(
                train.flat,
                train.labels(attribute),
                epochs=int(c["epochs"]),
                batch=int(c["batch"]),
                seed=int(emb["judge_seed"]),
                n_classes=classifier.n_classes,
                hidden=int(c["hidden"]),
                feature_dim=int(c["feature_dim"]),
                lr=float(c["lr"]),
                weight_decay=float(c["weight_decay"]),
            ).model
        embeddings, report = learn_embeddings(
            train.images[:n_train],
            train.labels(attribute)[:n_train],
            denoiser,
            classifier,
            codec,
            schedule,
            ecfg,
            iters=int(emb["iters"]),
            batch=min(int(emb["batch"]), n_train),
            heldout=(heldout.images[:n_eval], heldout.labels(attribute)[:n_eval]),
            attribute=attribute,
            judge=judge,
        )
        manifest.add_artifacts(
            *save_embeddings(
                embeddings,
                out / attribute,
                scale=ecfg.scale,
                L_frac=ecfg.L_frac,
                gamma=ecfg.gamma,
                n_train=n_train,
                dataset_sha256=dataset_fingerprint(cfg),
            )
        )
        report.history.to_csv(out / f"{attribute}_history.csv", index=False)
        manifest.add_artifact(out / f"{attribute}_history.csv")
        fig = plot_loss_curves(
            report.history, "iteration", ["edit_loss", "rec_loss", "combined_loss"], title=f"{attribute} embeddings"
        )
        manifest.add_artifact(save_figure(fig, out / f"{attribute}_history.png"))
        manifest.metrics[attribute] = {**report.summary(), "scored_by_judge": judge is not None}
    manifest.write()
    return manifest


# ============================================================================
# edit
# ============================================================================

EDIT_MODES = ("multi", "single", "interpolate", "multi_attribute")


def _edit_targets(labels: np.ndarray, n_classes: int, rule: str) -> np.ndarray:
    if rule == "own":
        return labels.copy()
    if rule == "opposite":
        return (labels + 1) % n_classes
    raise ValueError(f"unknown edit.targets {rule!r}; expected own or opposite")


def _edit_attribute(cfg, manifest, held, models, ecfg, single: bool) -> dict:
    """Edit every image toward a target class of one attribute and score the result."""
    e = cfg.section("edit")
    denoiser, codec, schedule = models
    out = manifest.stage_dir
    attribute = e["attribute"]
    classifier = load_classifier(cfg, attribute, manifest)
    embeddings = load_attribute_embeddings(cfg, attribute, manifest)
    y = held.labels(attribute)
    targets = _edit_targets(y, classifier.n_classes, e["targets"])

    edited = edit_towards(held.images, embeddings, targets, ecfg, denoiser, codec, schedule, single_step=single)
    recon = edit(held.images, None, replace(ecfg, scale=0.0), denoiser, codec, schedule)
    verdicts = edit_verdicts(classifier, held.images, edited, y, targets, ecfg.scale)
    verdicts["outside_mse"] = outside_region_mse(held.images, edited, held.region(attribute))
    verdicts["edit_mse"] = reconstruction_mse(held.images, edited)
    verdicts["recon_mse"] = reconstruction_mse(held.images, recon)

    metrics = {
        "n_images": len(held),
        "target_rate": float(np.mean(verdicts["predicted_after"] == verdicts["target_label"])),
        "mean_outside_mse": float(verdicts["outside_mse"].mean()),
        "mean_edit_mse": float(verdicts["edit_mse"].mean()),
        "mean_recon_mse": float(verdicts["recon_mse"].mean()),
    }
    if ecfg.scale != 0.0:
        metrics["success_rate"] = float(np.mean(verdicts["verdict"] == "success"))
    if e["targets"] == "own":
        metrics["guided_closer_rate"] = float(np.mean(verdicts["edit_mse"] < verdicts["recon_mse"]))
    if single:
        multi = edit_towards(held.images, embeddings, targets, ecfg, denoiser, codec, schedule)
        verdicts["predicted_multi"] = classifier.predict(multi.reshape(len(held), -1))
        metrics["agreement_with_multi"] = float(np.mean(verdicts["predicted_multi"] == verdicts["predicted_after"]))

    for other in cfg.section("classifier")["attributes"]:
        if other == attribute or not has_artifact(cfg, "classifier", f"{other}.bin"):
            continue
        other_clf = load_classifier(cfg, other, manifest)
        before = other_clf.predict(held.flat)
        after = other_clf.predict(edited.reshape(len(held), -1))
        verdicts[f"{other}_preserved"] = before == after
        metrics[f"{other}_preserved_rate"] = float(np.mean(before == after))

    verdicts.to_csv(out / "verdicts.csv", index=False)
    write_pgm(out / "grid.pgm", make_grid([held.images, recon, edited], max_cols=16))
    manifest.add_artifacts(out / "verdicts.csv", out / "grid.pgm")
    logger.info(f"Edited {len(held)} images toward {attribute} targets: target rate {metrics['target_rate']:.3f}")
    return metrics


def _edit_interpolate(cfg, manifest, held, models, ecfg) -> dict:
    """Sweep the guidance scale from one shared inversion toward a single class."""
    e = cfg.section("edit")
    denoiser, codec, schedule = models
    out = manifest.stage_dir
    attribute = e["attribute"]
    a = int(e["target_class"])
    classifier = load_classifier(cfg, attribute, manifest)
    embeddings = load_attribute_embeddings(cfg, attribute, manifest)
    if not 0 <= a < len(embeddings):
        raise ValueError(f"edit.target_class {a} outside 0..{len(embeddings) - 1}")
    lambdas = [float(lam) for lam in e["lambdas"]]
    y = held.labels(attribute)
    n = len(held)

    edits = interpolate_scale(held.images, embeddings[a], lambdas, ecfg, denoiser, codec, schedule)
    frames = []
    for lam, edited in zip(lambdas, edits):
        logits = classifier.logits(edited.reshape(n, -1)).data
        frames.append(
            pd.DataFrame(
                {
                    "index": np.arange(n),
                    "source_label": y,
                    "scale": lam,
                    "target_logit": logits[:, a],
                    "predicted": np.argmax(logits, axis=1),
                }
            )
        )
    per_image = pd.concat(frames, ignore_index=True)
    summary = (
        per_image.assign(on_target=per_image["predicted"] == a)
        .groupby("scale", sort=True)
        .agg(
            mean_target_logit=("target_logit", "mean"),
            std_target_logit=("target_logit", "std"),
            target_rate=("on_target", "mean"),
        )
        .reset_index()
    )
    rho, _ = spearmanr(summary["scale"], summary["mean_target_logit"])

    lowest = per_image[(per_image["scale"] == min(lambdas)) & (per_image["source_label"] == a)]
    flip_rate = float(np.mean(lowest["predicted"] != a)) if len(lowest) else float("nan")

    per_image.to_csv(out / "interpolation.csv", index=False)
    summary.to_csv(out / "interpolation_summary.csv", index=False)
    fig = plot_interpolation(summary, title=f"{attribute} class {a}")
    manifest.add_artifact(save_figure(fig, out / "interpolation.png"))
    order = np.argsort(lambdas)
    write_pgm(out / "grid.pgm", make_grid([held.images] + [edits[i] for i in order], max_cols=16))
    manifest.add_artifacts(out / "interpolation.csv", out / "interpolation_summary.csv", out / "grid.pgm")
    logger.info(f"Interpolation toward {attribute}={a}: spearman {rho:.3f}, flip rate {flip_rate:.3f}")
    return {
        "target_class": a,
        "lambdas": lambdas,
        "spearman": float(rho),
        "flip_rate_at_min_scale": flip_rate,
        "mean_target_logit": summary["mean_target_logit"].tolist(),
    }


def _edit_multi_attribute(cfg, manifest, held, models, ecfg) -> dict:
    """Edit several attributes at once with concatenated embeddings."""
    e = cfg.section("edit")
    denoiser, codec, schedule = models
    out = manifest.stage_dir
    attributes = list(cfg.section("embedding")["attributes"])
    if len(attributes) < 2:
        raise ValueError("multi_attribute editing needs at least two embedding attributes")
    classifiers = {attr: load_classifier(cfg, attr, manifest) for attr in attributes}
    embeddings = {attr: load_attribute_embeddings(cfg, attr, manifest) for attr in attributes}
    targets = {
        attr: _edit_targets(held.labels(attr), classifiers[attr].n_classes, e["targets"]) for attr in attributes
    }

    combos = np.stack([targets[attr] for attr in attributes], axis=1)
    edited = np.empty_like(held.images)
    order_invariant = None
    for combo in np.unique(combos, axis=0):
        rows = np.flatnonzero((combos == combo).all(axis=1))
        parts = [embeddings[attr][int(t)] for attr, t in zip(attributes, combo)]
        edited[rows] = edit(held.images[rows], concat_embeddings(parts), ecfg, denoiser, codec, schedule)
        if order_invariant is None:
            permuted = edit(held.images[rows], concat_embeddings(parts[::-1]), ecfg, denoiser, codec, schedule)
            order_invariant = bool(np.array_equal(permuted, edited[rows]))

    verdicts = pd.DataFrame({"index": np.arange(len(held))})
    hits = np.ones(len(held), dtype=bool)
    metrics: dict = {"attributes": attributes, "order_invariant": order_invariant}
    for attr in attributes:
        predicted = classifiers[attr].predict(edited.reshape(len(held), -1))
        success = predicted == targets[attr]
        verdicts[f"source_{attr}"] = held.labels(attr)
        verdicts[f"target_{attr}"] = targets[attr]
        verdicts[f"predicted_{attr}"] = predicted
        verdicts[f"success_{attr}"] = success
        metrics[f"{attr}_success_rate"] = float(success.mean())
        hits &= success
    verdicts["all_success"] = hits
    metrics["joint_success_rate"] = float(hits.mean())

    verdicts.to_csv(out / "verdicts.csv", index=False)
    write_pgm(out / "grid.pgm", make_grid([held.images, edited], max_cols=16))
    manifest.add_artifacts(out / "verdicts.csv", out / "grid.pgm")
    logger.info(f"Multi-attribute edit of {attributes}: joint success {metrics['joint_success_rate']:.3f}")
    return metrics


def cmd_edit(cfg: RunConfig) -> RunManifest:
    manifest = start_stage(cfg, "edit", "edit")
    _, _, heldout = load_data(cfg, manifest)
    heldout = _require_shapes(heldout, "edit")
    e = cfg.section("edit")
    mode = e["mode"]
    if mode not in EDIT_MODES:
        raise ValueError(f"unknown edit.mode {mode!r}; expected one of {EDIT_MODES}")
    held = heldout.subset(np.arange(min(int(e["n_images"]), len(heldout))))
    schedule = schedule_from(cfg)
    models = (load_denoiser(cfg, manifest), load_codec(cfg, manifest), schedule)
    ecfg = edit_config_from(cfg)

    if mode == "interpolate":
        metrics = _edit_interpolate(cfg, manifest, held, models, ecfg)
    elif mode == "multi_attribute":
        metrics = _edit_multi_attribute(cfg, manifest, held, models, ecfg)
    else:
        metrics = _edit_attribute(cfg, manifest, held, models, ecfg, single=mode == "single")

    record = {
        "mode": mode,
        "attribute": e["attribute"],
        "targets": e["targets"],
        "scale": ecfg.scale,
        "L_frac": ecfg.L_frac,
        "L": schedule.level(ecfg.L_frac),
        "window": list(ecfg.window),
        "steps": ecfg.steps,
        "edit_steps": ecfg.edit_steps,
        "seed": ecfg.seed,
    }
    manifest.add_artifact(write_yaml(manifest.stage_dir / "edit_record.yaml", record))
    manifest.metrics = metrics
    manifest.write()
    return manifest


# ============================================================================
# diagnose
# ============================================================================

def cmd_diagnose(cfg: RunConfig) -> RunManifest:
    manifest = start_stage(cfg, "diagnose", "diagnose")
    dataset, train, heldout = load_data(cfg, manifest)
    dg = cfg.section("diagnose")
    out = manifest.stage_dir
    schedule = schedule_from(cfg)
    ecfg = edit_config_from(cfg)
    have_denoiser = has_artifact(cfg, "denoiser", "denoiser.bin")
    if have_denoiser:
        codec, denoiser = load_codec(cfg, manifest), load_denoiser(cfg, manifest)
    n_eval = min(int(cfg.section("edit")["n_images"]), len(heldout))
    attributes = classifier_attributes(cfg, dataset)

    for attribute in attributes:
        classifier = load_classifier(cfg, attribute, manifest)
        y = attribute_labels(train, attribute)
        keep = balanced_indices(y)
        x, yk = train.flat[keep], y[keep]
        report = collapse_report(classifier, x, yk)
        manifest.add_artifact(report.to_yaml(out / f"collapse_{attribute}.yaml"))
        report.per_class_frame().to_csv(out / f"collapse_{attribute}_per_class.csv", index=False)
        features_frame(classifier.features(x).data, yk).to_csv(out / f"features_{attribute}.csv", index=False)
        manifest.add_artifacts(out / f"collapse_{attribute}_per_class.csv", out / f"features_{attribute}.csv")
        summary = report.to_dict()
        metrics = {
            key: summary[key]
            for key in ("accuracy", "collapse_ratio", "decomposition_error", "etf_offdiag_mean",
                        "etf_target_cos", "norm_spread", "beta_fit", "beta_residual")
        }
        metrics["min_wa_mu_cos"] = float(np.min(report.wa_mu_cos))

        if have_denoiser and isinstance(dataset, ShapesDataset) and has_artifact(cfg, "embeddings", f"{attribute}.bin"):
            embeddings = load_attribute_embeddings(cfg, attribute, manifest)
            generate = make_generator(ecfg, denoiser, codec, schedule, multi_step=bool(dg["multi_step"]))
            aligned = generated_alignment(classifier, embeddings, heldout.flat[:n_eval], generate)
            body = {
                "generator": "multi_step" if dg["multi_step"] else "single_step",
                "cosines": aligned.cosines,
                "beta": aligned.beta,
                "residual": aligned.residual,
                "mu_prime": aligned.mu_prime,
            }
            manifest.add_artifact(write_yaml(out / f"generated_alignment_{attribute}.yaml", body))
            metrics["generated_min_cos"] = float(np.min(aligned.cosines))
            metrics["generated_beta"] = aligned.beta
        manifest.metrics[attribute] = metrics
        logger.info(f"Collapse diagnostics for {attribute}: ratio {report.collapse_ratio:.4f}")

    if have_denoiser:
        attribute = attributes[0]
        classifier = load_classifier(cfg, attribute, manifest)
        target = min(int(cfg.section("edit")["target_class"]), classifier.n_classes - 1)
        probe = dict(
            n_probe=int(dg["n_probe"]), n_samples=int(dg["n_samples"]), target_class=target, seed=cfg.seed
        )
        levels = [schedule.level(float(f)) for f in dg["level_fracs"]]
        sweep = jensen_sweep(
            classifier, codec, denoiser, heldout.flat, schedule, levels, [float(s) for s in dg["sigma2"]], **probe
        )
        sweep.to_csv(out / "jensen_sweep.csv", index=False)
        manifest.add_artifact(out / "jensen_sweep.csv")
        manifest.add_artifact(save_figure(plot_jensen_sweep(sweep, title=f"{attribute} classifier"), out / "jensen_sweep.png"))
        estimate = jensen_gap_bound(
            classifier, codec, denoiser, heldout.flat, schedule, schedule.level(ecfg.L_frac), sigma2=1.0, **probe
        )
        manifest.add_artifact(write_yaml(out / "jensen.yaml", {"attribute": attribute, **estimate.to_dict()}))
        q = sweep.drop_duplicates("L").sort_values("L")["Q_mc"].to_numpy()
        manifest.metrics["jensen"] = {
            "bound": estimate.bound,
            "grad_norm_max": estimate.grad_norm_max,
            "Q_mc": estimate.Q_mc,
            "Q_increases_with_L": bool(np.all(np.diff(q) > 0)),
        }
    manifest.write()
    return manifest
