"""Toy fine-tuning runs and score export against the main toolkit."""

import json

import numpy as np
import pytest
import torch

import earbench.fusion as primary_fusion
from earbench.evaluation import rank_accuracy

from cnn_adapter.cli import run
from cnn_adapter.config import FineTuneConfig
from cnn_adapter.export import export_scores
from cnn_adapter.formats import read_manifest
from cnn_adapter.models import WeightsError, build_model
from cnn_adapter.train import finetune_two_stage, load_artifact, model_from_artifact


def toy_config(manifest_path, tmp_path, **overrides):
    base = dict(
        architecture="alexnet",
        weights="none",
        stage1_manifest=str(manifest_path),
        stage2_manifest=str(manifest_path),
        output=str(tmp_path / "model.pt"),
        base_lr=0.001,
        batch_size=25,
        epochs=3,
        train_crops=1,
        seed=7,
    )
    base.update(overrides)
    return FineTuneConfig(**base)


class TestModels:
    def test_missing_weights_file_is_an_error(self, tmp_path):
        with pytest.raises(WeightsError, match="not found"):
            build_model("alexnet", 5, str(tmp_path / "ghost.pt"))

    def test_head_sizes_match_class_count(self):
        for architecture, attr in (("alexnet", "classifier"), ("googlenet", "fc")):
            model = build_model(architecture, 7, "none")
            head = model.classifier[6] if attr == "classifier" else model.fc
            assert head.out_features == 7

    def test_unknown_architecture_rejected(self):
        with pytest.raises(ValueError):
            build_model("resnet50", 5, "none")


class TestConfig:
    def test_per_architecture_defaults(self, tmp_path):
        for architecture, lr, crop in (("alexnet", 0.0001, 227),
                                       ("googlenet", 0.0001, 224),
                                       ("vgg16", 0.001, 224)):
            config = FineTuneConfig(architecture=architecture, stage1_manifest="a",
                                    stage2_manifest="b", output="o")
            assert config.base_lr == lr
            assert config.crop_size == crop
            assert config.last_layer_lr_multiplier == 10.0
            assert config.lr_decay_every == 20_000

    def test_from_file_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"architecture": "alexnet", "stage1_manifest": "a",
                                    "stage2_manifest": "b", "output": "o",
                                    "turbo": True}))
        with pytest.raises(ValueError, match="turbo"):
            FineTuneConfig.from_file(path)


class TestFineTune:
    def test_two_stage_toy_run_loss_decreases(self, toy_split_manifest, tmp_path):
        config = toy_config(toy_split_manifest, tmp_path)
        artifact = finetune_two_stage(config)
        for stage in ("stage1_loss", "stage2_loss"):
            losses = artifact["history"][stage]
            assert len(losses) == 3
            assert losses[0] > losses[1] > losses[2], (stage, losses)
        assert len(artifact["classes"]) == 5
        assert (tmp_path / "model.pt").exists()

    def test_stage2_only_baseline(self, toy_split_manifest, tmp_path):
        config = toy_config(toy_split_manifest, tmp_path, skip_stage1=True, epochs=1)
        artifact = finetune_two_stage(config)
        assert "stage1_loss" not in artifact["history"]
        assert len(artifact["history"]["stage2_loss"]) == 1

    def test_same_seed_gives_identical_predictions(self, toy_split_manifest, tmp_path):
        probes = [e for e in read_manifest(toy_split_manifest) if e.split == "test"][:10]

        def train_and_score(tag):
            config = toy_config(toy_split_manifest, tmp_path, epochs=1,
                                output=str(tmp_path / f"{tag}.pt"), skip_stage1=True)
            artifact = finetune_two_stage(config)
            model = model_from_artifact(artifact)
            from cnn_adapter.data import CropDataset
            dataset = CropDataset(probes, artifact["classes"], config.crop_size, "test")
            with torch.no_grad():
                return model(torch.stack([dataset[i][0]
                                          for i in range(len(dataset))])).numpy()

        np.testing.assert_array_equal(train_and_score("one"), train_and_score("two"))


class TestExport:
    def make_untrained_artifact(self, manifest_path, architecture):
        entries = read_manifest(manifest_path)
        classes = sorted({e.subject for e in entries})
        torch.manual_seed(3)
        model = build_model(architecture, len(classes), "none")
        crop = 227 if architecture == "alexnet" else 224
        return {"architecture": architecture, "classes": classes,
                "crop_size": crop, "state_dict": model.state_dict(), "history": {}}

    def test_rows_pass_primary_validation(self, toy_split_manifest, tmp_path):
        artifact = self.make_untrained_artifact(toy_split_manifest, "alexnet")
        out = tmp_path / "alexnet.tsv"
        count = export_scores(artifact, toy_split_manifest, out)
        matrix = primary_fusion.read_scores(out)
        assert matrix.n_samples == count == 40
        np.testing.assert_allclose(matrix.rows.sum(axis=1), 1.0, atol=1e-6)

    def test_two_architectures_fuse_without_mismatch(self, toy_split_manifest, tmp_path):
        files = []
        for architecture in ("alexnet", "googlenet"):
            artifact = self.make_untrained_artifact(toy_split_manifest, architecture)
            out = tmp_path / f"{architecture}.tsv"
            export_scores(artifact, toy_split_manifest, out)
            files.append(out)
        matrices = [primary_fusion.read_scores(f) for f in files]
        decisions = primary_fusion.fuse_max(matrices, "d2s")
        assert len(decisions) == 40

    def test_class_mismatch_lists_extras_and_missing(self, toy_split_manifest, tmp_path):
        artifact = self.make_untrained_artifact(toy_split_manifest, "alexnet")
        artifact["classes"] = [c for c in artifact["classes"] if c != "s00"] + ["zz"]
        with pytest.raises(ValueError) as excinfo:
            export_scores(artifact, toy_split_manifest, tmp_path / "x.tsv")
        assert "zz" in str(excinfo.value) and "s00" in str(excinfo.value)

    def test_exported_scores_are_usable_for_evaluation(self, toy_split_manifest,
                                                       tmp_path):
        artifact = self.make_untrained_artifact(toy_split_manifest, "alexnet")
        out = tmp_path / "scores.tsv"
        export_scores(artifact, toy_split_manifest, out)
        matrix = primary_fusion.read_scores(out)
        truth = {e.image_id: e.subject for e in read_manifest(toy_split_manifest)
                 if e.split == "test"}
        report = rank_accuracy(matrix, truth)
        assert report.at_rank(matrix.n_classes) == 1.0


class TestCli:
    def test_finetune_and_export_commands(self, toy_split_manifest, tmp_path, capsys):
        config_path = tmp_path / "cfg.json"
        config_path.write_text(json.dumps({
            "architecture": "alexnet", "weights": "none",
            "stage1_manifest": str(toy_split_manifest),
            "stage2_manifest": str(toy_split_manifest),
            "output": str(tmp_path / "model.pt"),
            "base_lr": 0.001, "batch_size": 25, "epochs": 1,
            "train_crops": 1, "seed": 7, "skip_stage1": True,
        }))
        assert run(["finetune", "--config", str(config_path)]) == 0
        assert "stage2" in capsys.readouterr().out
        out = tmp_path / "scores.tsv"
        assert run(["export", "--model", str(tmp_path / "model.pt"),
                    "--manifest", str(toy_split_manifest), "--out", str(out)]) == 0
        assert primary_fusion.read_scores(out).n_samples == 40

    def test_bad_config_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["finetune", "--config", str(bad)]) == 2

    def test_unknown_flag_is_usage_error(self, capsys):
        assert run(["export", "--bogus"]) == 1
