import pandas as pd
import pytest
import yaml

from scripts.verify_checksums import main as verify_main
from src.cli import COMMANDS, build_parser, main
from src.pipeline.commands import cmd_gen_data
from src.io.storage import read_yaml

GMM = {
    "data": {"kind": "gmm", "n": 40, "gmm": {"K": 2, "dim": 2, "separation": 8.0}},
    "classifier": {"hidden": 8, "feature_dim": 4, "epochs": 20, "batch": 10},
}


def _config(tmp_path, body=GMM):
    path = tmp_path / "override.yaml"
    path.write_text(yaml.safe_dump(body))
    return str(path)


def _run(tmp_path, command, *extra, body=GMM):
    return main([command, "--config", _config(tmp_path, body), "--out", str(tmp_path / "run"), *extra])


def test_parser_knows_every_stage():
    parser = build_parser()
    for verb in ["gen-data", "train-denoiser", "train-classifier", "learn-embedding", "edit", "diagnose"]:
        args = parser.parse_args([verb, "--seed", "3"])
        assert args.command == verb and args.seed == 3, f"{verb} must parse"
    assert set(COMMANDS) == {"gen-data", "train-denoiser", "train-classifier", "learn-embedding", "edit", "diagnose"}


def test_no_command_is_an_error():
    assert main([]) == 1, "a bare invocation prints help and fails"


def test_gen_data_writes_manifest(tmp_path):
    assert _run(tmp_path, "gen-data", "--seed", "7") == 0, "gen-data should succeed"
    stage = tmp_path / "run" / "data"
    manifest = read_yaml(stage / "manifest.yaml")
    assert manifest["command"] == "gen-data", "manifest names its command"
    assert set(manifest["artifacts"]) >= {"dataset.bin", "split.csv", "points.csv"}, "every output is listed"
    assert manifest["metrics"]["n_train"] == 20 and manifest["metrics"]["n_heldout"] == 20, "half split"
    assert read_yaml(stage / "config.yaml")["seed"] == 7, "effective config is echoed with the override"
    parts = pd.read_csv(stage / "split.csv")
    assert parts["part"].value_counts().to_dict() == {"train": 20, "heldout": 20}, "split file"


def test_tampered_artifact_is_refused(tmp_path):
    assert _run(tmp_path, "gen-data") == 0
    split_path = tmp_path / "run" / "data" / "split.csv"
    split_path.write_text(split_path.read_text().replace("train", "heldout", 1))
    assert _run(tmp_path, "train-classifier") == 1, "a checksum mismatch must stop the stage"
    with pytest.raises(SystemExit):
        verify_main([str(tmp_path / "run")])


def test_missing_inputs_and_config(tmp_path):
    assert main(["gen-data", "--config", str(tmp_path / "absent.yaml")]) == 1, "missing config file"
    assert _run(tmp_path, "train-classifier") == 1, "no data stage yet"
    assert _run(tmp_path, "gen-data", body={"data": {"kind": "voxels"}}) == 1, "unknown data kind"


def test_mixture_pipeline_without_denoiser(tmp_path):
    assert _run(tmp_path, "gen-data") == 0
    assert _run(tmp_path, "train-classifier") == 0, "classifier stage should succeed"
    assert _run(tmp_path, "diagnose") == 0, "diagnose runs on classifier artifacts alone"
    diag = read_yaml(tmp_path / "run" / "diagnose" / "manifest.yaml")
    assert "component" in diag["metrics"], "mixtures have a single component attribute"
    assert "jensen.yaml" not in diag["artifacts"], "no denoiser, no Jensen estimate"
    assert (tmp_path / "run" / "diagnose" / "collapse_component.yaml").exists(), "collapse report"
    verify_main([str(tmp_path / "run")])


def _csv_bytes(run_dir):
    return {p.relative_to(run_dir).as_posix(): p.read_bytes() for p in sorted(run_dir.rglob("*.csv"))}


def test_reruns_reproduce_every_table(tmp_path):
    config = _config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        for verb in ["gen-data", "train-classifier", "diagnose"]:
            assert main([verb, "--config", config, "--out", str(out)]) == 0, f"{verb} into {out.name}"
    tables_a, tables_b = _csv_bytes(out_a), _csv_bytes(out_b)
    assert "data/split.csv" in tables_a and "diagnose/features_component.csv" in tables_a, "tables are written"
    assert tables_a.keys() == tables_b.keys(), "both runs write the same tables"
    for name in tables_a:
        assert tables_a[name] == tables_b[name], f"{name} differs between identical runs"

    assert main(["train-classifier", "--config", config, "--out", str(out_a)]) == 0, "a stage reruns in place"
    assert _csv_bytes(out_a) == tables_a, "rerunning a stage in place leaves its tables unchanged"
    verify_main([str(out_a)])


def test_nan_metric_exits_two(tmp_path, monkeypatch):
    def gen_data_with_nan(cfg):
        manifest = cmd_gen_data(cfg)
        manifest.metrics["spread"] = float("nan")
        return manifest

    monkeypatch.setitem(COMMANDS, "gen-data", (gen_data_with_nan, "gen-data"))
    assert _run(tmp_path, "gen-data") == 2, "a finished stage with a NaN metric exits with 2"


def test_missing_config_key_exits_one(tmp_path):
    assert _run(tmp_path, "gen-data", body={"data": None}) == 1, "an emptied config section is a handled error"
