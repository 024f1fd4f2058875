import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from advrep.cli import main
from advrep.errors import ConfigError
from advrep.pipeline import PipelineConfig, REPORT_SCHEMA, validate_report

ALL_STAGES = ["synth", "train", "attribute", "embed", "score", "leiden", "stratify", "report"]


def tiny_config(seed=7):
    return {
        "seed": seed,
        "data": {"synth": {"n_per_domain": 30, "n_domains": 3, "n_features": 24,
                           "domain_subset_size": 3, "label_subset_size": 5,
                           "domain_effect": 2.5, "label_effect": 1.0}},
        "train": {"epochs": 8, "batch_size": 16},
        "model": {"hidden_dim": 8},
        "snapshot_epochs": [2, 8],
        "attribution": {"background_size": 12, "vanilla_coalitions": 32,
                        "surrogate_coalitions": 16,
                        "surrogate": {"n_rounds": 10},
                        "layers": ["feature_extractor.dropout1"]},
        "manifold": {"n_neighbors": 10, "layout_epochs": 40, "knn_neighbors": 15,
                     "resolution": 0.3, "pca_dims": 10},
        "stratify": {"top_k": 5, "driver_coalitions": 64, "surrogate": {"n_rounds": 10}},
    }


def write_config(tmp_path, payload):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


def tree_hashes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipeline")
    cfg = write_config(tmp, tiny_config())
    out = tmp / "run"
    for stage in ALL_STAGES:
        assert main([stage, "--config", str(cfg), "--out", str(out)]) == 0, stage
    return cfg, out


class TestStages:
    def test_artifacts_exist(self, full_run):
        _, out = full_run
        for rel in ("data/expression.csv", "data/labels.csv", "train/metrics.csv",
                    "train/checkpoint.json", "train/snapshots/epoch_8/feature_extractor.dropout1.csv",
                    "attribute/vanilla.csv", "attribute/epoch_8/feature_extractor.dropout1.csv",
                    "embed/input.csv", "embed/vanilla.csv",
                    "embed/epoch_8/activations_feature_extractor.dropout1.csv",
                    "embed/epoch_8/attributions_feature_extractor.dropout1.csv",
                    "score/scores.csv", "leiden/clusters.csv", "stratify/report.json",
                    "report/report.json", "report/figures.json"):
            assert (out / rel).exists(), rel

    def test_train_rerun_identical_metrics(self, full_run, tmp_path):
        cfg, out = full_run
        before = hashlib.sha256((out / "train" / "metrics.csv").read_bytes()).hexdigest()
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        after = hashlib.sha256((out / "train" / "metrics.csv").read_bytes()).hexdigest()
        assert before == after

    def test_stage_isolation_downstream_rerun(self, full_run):
        cfg, out = full_run
        before = tree_hashes(out / "score")
        shutil.rmtree(out / "score")
        assert main(["score", "--config", str(cfg), "--out", str(out)]) == 0
        assert tree_hashes(out / "score") == before

    def test_score_csv_cardinality(self, full_run):
        import csv

        _, out = full_run
        with (out / "score" / "scores.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        combos = {(r["source"], r["label_kind"], r["metric"]) for r in rows}
        # 2 sources x 2 labelings x 2 metrics
        assert len(combos) == 8
        epochs = {r["epoch"] for r in rows}
        assert epochs == {"2", "8"}

    def test_missing_artifact_exit_code_and_hint(self, tmp_path, capsys):
        cfg = write_config(tmp_path, tiny_config())
        out = tmp_path / "fresh"
        rc = main(["attribute", "--config", str(cfg), "--out", str(out)])
        assert rc == 3
        assert "advrep synth" in capsys.readouterr().err
        assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
        rc = main(["attribute", "--config", str(cfg), "--out", str(out)])
        assert rc == 3
        assert "advrep train" in capsys.readouterr().err

    def test_seed_override_changes_artifacts(self, full_run, tmp_path):
        cfg, out = full_run
        other = tmp_path / "other"
        assert main(["synth", "--config", str(cfg), "--out", str(other), "--seed", "99"]) == 0
        a = (out / "data" / "expression.csv").read_bytes()
        b = (other / "data" / "expression.csv").read_bytes()
        assert a != b


class TestReport:
    def test_validates_against_schema(self, full_run):
        _, out = full_run
        report = json.loads((out / "report" / "report.json").read_text())
        validate_report(report, REPORT_SCHEMA)

    def test_summary_silhouettes_recompute_from_csv(self, full_run):
        from advrep import silhouette
        from advrep.data import load_expression_csv
        from advrep.pipeline import read_embedding_csv

        _, out = full_run
        report = json.loads((out / "report" / "report.json").read_text())
        ds = load_expression_csv(out / "data" / "expression.csv", out / "data" / "labels.csv")
        _, coords = read_embedding_csv(out / "embed" / "vanilla.csv")
        recomputed = silhouette(coords, ds.label)
        assert abs(report["summary"]["silhouettes"]["vanilla"]["label"] - recomputed) <= 1e-12

    def test_violin_uses_paper_defaults(self, full_run):
        _, out = full_run
        violin = json.loads((out / "stratify" / "violin.json").read_text())
        for payload in violin.values():
            assert payload["alpha"] == -2.0
            assert payload["base"] == 10.0

    def test_partial_run_marks_missing(self, tmp_path):
        cfg = write_config(tmp_path, tiny_config())
        out = tmp_path / "partial"
        assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "report" / "report.json").read_text())
        assert "train" in report["missing_stages"]
        assert "synth" not in report["missing_stages"]

    def test_schema_validator_rejects_bad(self):
        with pytest.raises(ConfigError):
            validate_report({"config": {}}, REPORT_SCHEMA)


class TestConfig:
    def test_missing_seed_rejected(self, tmp_path):
        payload = tiny_config()
        del payload["seed"]
        path = write_config(tmp_path, payload)
        with pytest.raises(ConfigError, match="seed"):
            PipelineConfig.from_json(path)

    def test_missing_data_rejected(self, tmp_path):
        path = write_config(tmp_path, {"seed": 1})
        with pytest.raises(ConfigError):
            PipelineConfig.from_json(path)

    def test_nonexistent_csv_rejected(self, tmp_path):
        path = write_config(
            tmp_path,
            {"seed": 1, "data": {"expression_csv": "/nope.csv", "labels_csv": "/nope2.csv"}},
        )
        with pytest.raises(ConfigError):
            PipelineConfig.from_json(path)

    def test_config_error_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path, {"seed": 1})
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_out_dir_is_config_error(self, tmp_path):
        path = write_config(tmp_path, tiny_config())
        assert main(["synth", "--config", str(path)]) == 2

    def test_out_dir_from_config(self, tmp_path):
        payload = tiny_config()
        payload["out_dir"] = str(tmp_path / "from_config")
        path = write_config(tmp_path, payload)
        assert main(["synth", "--config", str(path)]) == 0
        assert (tmp_path / "from_config" / "data" / "expression.csv").exists()
