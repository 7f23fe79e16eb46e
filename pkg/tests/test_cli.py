import json
import subprocess
import sys

import numpy as np
import pytest

from ecan.cli import RunConfig, main
from ecan.data import Corpus, load_corpus, save_corpus


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def generated(tmp_path):
    assert run("gen-data", "--classes", 3, "--dim", 6, "--samples-per-class", 30, "--seed", 7,
               "--out-dir", tmp_path) == 0
    return tmp_path


def test_gen_data_writes_corpora_and_manifests(tmp_path):
    out = tmp_path / "runs" / "a"
    assert run("gen-data", "--classes", 4, "--dim", 16, "--seed", 7, "--out-dir", out) == 0
    for name in ("source.csv", "source.json", "target.csv", "target.json", "gen-data.config.json"):
        assert (out / name).exists()
    target = load_corpus(out / "target.csv")
    assert target.features.shape == (600, 16) and target.class_count == 4


def test_gen_data_is_idempotent(tmp_path):
    for sub in ("a", "b"):
        assert run("gen-data", "--seed", 3, "--out-dir", tmp_path / sub) == 0
    for name in ("source.csv", "source.json", "target.csv", "target.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    configs = [json.loads((tmp_path / sub / "gen-data.config.json").read_text()) for sub in "ab"]
    assert [c.pop("out_dir") for c in configs] == [str(tmp_path / "a"), str(tmp_path / "b")]
    assert configs[0] == configs[1]


def test_gen_data_rejects_single_class(tmp_path, capsys):
    assert run("gen-data", "--classes", 1, "--out-dir", tmp_path) == 2
    assert "class" in capsys.readouterr().err


def test_full_chain(generated, capsys):
    d = generated
    assert run("pretrain", "--source", d / "source.csv", "--pretrain-epochs", 20, "--out-dir", d) == 0
    assert run("adapt", "--model", d / "source_model.json", "--target", d / "target.csv",
               "--epochs", 2, "--monitor-labels", "--out-dir", d) == 0
    assert run("eval", "--model", d / "adapted_model.json", "--corpus", d / "target.csv",
               "--out-dir", d) == 0
    report = json.loads((d / "report.json").read_text())
    assert 0.0 <= report["uar"] <= 1.0
    records = [json.loads(line) for line in (d / "run_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in records] == [1, 2] and records[0]["uar"] is not None
    assert run("project", "--model", d / "adapted_model.json", "--corpus", d / "target.csv",
               "--out-dir", d) == 0
    assert (d / "projection.csv").read_text().startswith("x,y,label\n")
    assert "UAR" in capsys.readouterr().out


def test_resolved_config_is_echoed(generated):
    cfg = json.loads((generated / "gen-data.config.json").read_text())
    assert cfg["classes"] == 3 and cfg["seed"] == 7 and "lambda" in cfg


def test_adapt_has_no_source_argument(generated):
    d = generated
    assert run("adapt", "--source", d / "source.csv", "--target", d / "target.csv") == 2


def test_ablation_flags_reach_the_objective(generated):
    d = generated
    assert run("pretrain", "--source", d / "source.csv", "--pretrain-epochs", 5, "--out-dir", d) == 0
    assert run("adapt", "--model", d / "source_model.json", "--target", d / "target.csv",
               "--epochs", 1, "--disable-ncl", "--disable-scl", "--out-dir", d) == 0
    record = json.loads((d / "run_log.jsonl").read_text())
    assert record["total"] == record["div"]
    cfg = json.loads((d / "adapt.config.json").read_text())
    assert cfg["disable_ncl"] and cfg["disable_scl"] and not cfg["disable_div"]


def test_eval_on_unlabeled_corpus(generated, tmp_path):
    d = generated
    assert run("pretrain", "--source", d / "source.csv", "--pretrain-epochs", 1, "--out-dir", d) == 0
    bare = load_corpus(d / "target.csv").without_labels()
    save_corpus(bare, tmp_path / "bare.csv")
    assert run("eval", "--model", d / "source_model.json", "--corpus", tmp_path / "bare.csv") == 2


def test_dimension_mismatch(generated, tmp_path):
    d = generated
    assert run("pretrain", "--source", d / "source.csv", "--pretrain-epochs", 1, "--out-dir", d) == 0
    save_corpus(Corpus(np.ones((4, 5)), [0, 1, 2, 0], 3), tmp_path / "narrow.csv")
    assert run("adapt", "--model", d / "source_model.json", "--target", tmp_path / "narrow.csv",
               "--out-dir", tmp_path) == 2


def test_missing_file(tmp_path):
    assert run("pretrain", "--source", tmp_path / "nope.csv", "--out-dir", tmp_path) == 2


def test_missing_required_path(tmp_path):
    assert run("eval", "--out-dir", tmp_path) == 2


def test_config_file_and_override(tmp_path):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"classes": 3, "dim": 4, "samples_per_class": 5, "seed": 1}))
    assert run("gen-data", "--config", config, "--dim", 5, "--out-dir", tmp_path) == 0
    assert load_corpus(tmp_path / "source.csv").features.shape == (15, 5)


def test_unknown_config_key(tmp_path):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"clases": 3}))
    assert run("gen-data", "--config", config, "--out-dir", tmp_path) == 2


def test_config_lambda_alias():
    cfg = RunConfig()
    cfg.update({"lambda": 0.25}, "test")
    assert cfg.hyperparams().lam == 0.25
    assert json.loads(cfg.to_json())["lambda"] == 0.25


def test_unknown_subcommand():
    assert run("train") == 2


def test_module_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "ecan", "gen-data", "--samples-per-class", "3",
                             "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    assert (tmp_path / "target.csv").exists()


def test_numeric_failure_exit_code(generated, tmp_path):
    d = generated
    assert run("pretrain", "--source", d / "source.csv", "--pretrain-epochs", 1, "--out-dir", d) == 0
    save_corpus(Corpus(np.ones((5, 6)), [0, 1, 2, 0, 1], 3), tmp_path / "flat.csv")
    assert run("project", "--model", d / "source_model.json", "--corpus", tmp_path / "flat.csv",
               "--out-dir", tmp_path) == 3
