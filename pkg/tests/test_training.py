"""
Tests for the two training stages, the optimizer and batch composition.
"""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from errors import ConfigurationError, DivergenceError
from losses import STAGE1_COLUMNS, STAGE2_COLUMNS, ContrastiveBatch, LossWeights, supcon_loss
from model import Checkpoint, Parameter, StyleNet
from tensor import RngStream, Tensor, l2_normalize
from training import (
    Adam,
    TrainConfig,
    batch_labels,
    evaluate,
    restore_network,
    train_deception_classifier,
    train_stage1,
    train_stage2,
)


def tiny_config(run_dir, **overrides) -> TrainConfig:
    values = dict(
        stage=1, lr=1e-3, batch_size=2, iterations=3, seed=0,
        channels=8, state_size=2, fusion_depth=1, proj_dim=8,
        run_dir=str(run_dir), checkpoint_every=0, verbose=False,
    )
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture(scope="module")
def stage1_run(tiny_dataset, tmp_path_factory):
    return train_stage1(tiny_config(tmp_path_factory.mktemp("stage1")), tiny_dataset)


# =============================================================================
# Configuration
# =============================================================================

class TestTrainConfig:

    def test_defaults_are_valid(self):
        TrainConfig().validate()

    @pytest.mark.parametrize("overrides", [
        {"lr": 0.0},
        {"lr": -1e-3},
        {"stage": 3},
        {"stage": 2, "batch_size": 1},
        {"stage": 2, "batch_size": 3},
        {"temperature": 0.0},
        {"iterations": -1},
    ])
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigurationError):
            replace(TrainConfig(), **overrides).validate()

    def test_stage1_allows_single_image_batches(self):
        TrainConfig(stage=1, batch_size=1).validate()


# =============================================================================
# Optimizer and batches
# =============================================================================

class TestAdam:

    def test_non_positive_learning_rate(self):
        with pytest.raises(ConfigurationError):
            Adam([Parameter(np.zeros(2))], lr=0.0)

    def test_first_step_moves_by_learning_rate(self):
        p = Parameter(np.array([1.0, -2.0]))
        optimizer = Adam([p], lr=0.1)
        (p * p).sum().backward()
        optimizer.step()
        np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-6)

    def test_parameters_without_gradient_are_untouched(self):
        p, q = Parameter(np.ones(2)), Parameter(np.ones(2))
        optimizer = Adam([p, q], lr=0.1)
        (p * 2.0).sum().backward()
        optimizer.step()
        np.testing.assert_array_equal(q.data, np.ones(2))

    def test_minimizes_a_quadratic(self):
        p = Parameter(np.array([3.0]))
        optimizer = Adam([p], lr=0.1)
        for _ in range(300):
            optimizer.zero_grad()
            ((p - 1.0) * (p - 1.0)).sum().backward()
            optimizer.step()
        assert p.data[0] == pytest.approx(1.0, abs=1e-2)


class TestBatchLabels:

    def test_four_rows_two_classes(self, rng):
        labels = batch_labels([0, 1, 2, 3], 4, rng)
        values, counts = np.unique(labels, return_counts=True)
        assert len(values) == 2 and list(counts) == [2, 2]
        assert labels[0] == labels[1] and labels[2] == labels[3]

    def test_every_class_has_a_positive(self, rng):
        for step in range(20):
            labels = batch_labels([0, 1, 2], 7, rng.split(step))
            _, counts = np.unique(labels, return_counts=True)
            assert len(counts) >= 2 and counts.min() >= 2

    @pytest.mark.parametrize("classes", [2, 3, 6])
    @pytest.mark.parametrize("batch_size", [4, 5, 6, 7, 8, 9])
    def test_no_singleton_class(self, rng, classes, batch_size):
        labels = batch_labels(list(range(classes)), batch_size, rng)
        _, counts = np.unique(labels, return_counts=True)
        assert len(labels) == batch_size
        assert len(counts) >= 2 and counts.min() >= 2

    @pytest.mark.parametrize("class_ids, batch_size", [([0, 1, 2], 3), ([0, 1], 2), ([0], 4)])
    def test_batch_without_two_pairs_rejected(self, rng, class_ids, batch_size):
        with pytest.raises(ConfigurationError):
            batch_labels(class_ids, batch_size, rng)

    def test_deterministic(self):
        a = batch_labels([0, 1, 2, 3], 6, RngStream(3))
        b = batch_labels([0, 1, 2, 3], 6, RngStream(3))
        np.testing.assert_array_equal(a, b)


# =============================================================================
# Stage 1
# =============================================================================

class TestStage1:

    def test_outputs(self, stage1_run):
        assert stage1_run.checkpoint_path.name == "stage1.json"
        assert stage1_run.checkpoint_path.is_file()
        frame = pd.read_csv(stage1_run.log_path)
        assert tuple(frame.columns) == STAGE1_COLUMNS
        assert list(frame["step"]) == [1, 2, 3]
        assert np.all(np.isfinite(frame["total"]))

    def test_checkpoint_carries_dataset_hash(self, stage1_run, tiny_dataset):
        header = Checkpoint.load(stage1_run.checkpoint_path).header
        assert header.manifest_hash == tiny_dataset.manifest.hash
        assert header.stage == 1 and header.step == 3
        assert not stage1_run.checkpoint.state_for("fusion")

    def test_reruns_are_bitwise_identical(self, stage1_run, tiny_dataset, tmp_path):
        again = train_stage1(tiny_config(tmp_path), tiny_dataset)
        assert again.log_path.read_bytes() == stage1_run.log_path.read_bytes()
        assert again.checkpoint_path.read_bytes() == stage1_run.checkpoint_path.read_bytes()

    def test_zero_iterations_keep_initial_parameters(self, tiny_dataset, tmp_path):
        cfg = tiny_config(tmp_path, iterations=0)
        result = train_stage1(cfg, tiny_dataset)
        fresh = StyleNet(cfg.network_config(tiny_dataset.codebook.dim))
        for prefix in ("encoder", "decoder"):
            initial = getattr(fresh, prefix).state_dict()
            saved = result.checkpoint.state_for(prefix)
            assert saved.keys() == initial.keys()
            for name in initial:
                np.testing.assert_array_equal(saved[name], initial[name])

    def test_reconstruction_loss_falls(self, tiny_dataset, tmp_path):
        batch = len(tiny_dataset.train_contents)
        cfg = tiny_config(tmp_path, iterations=25, lr=3e-3, batch_size=batch)
        frame = pd.read_csv(train_stage1(cfg, tiny_dataset).log_path)
        assert frame["total"].tail(5).mean() < frame["total"].head(5).mean()

    def test_periodic_checkpoints(self, tiny_dataset, tmp_path):
        train_stage1(tiny_config(tmp_path, iterations=2, checkpoint_every=1), tiny_dataset)
        assert (tmp_path / "checkpoints" / "stage1_step1.json").is_file()
        assert (tmp_path / "checkpoints" / "stage1_step2.json").is_file()

    def test_divergence_saves_last_finite_checkpoint(self, tiny_dataset, tmp_path, monkeypatch):
        monkeypatch.setattr("training.trainer.perceptual_loss", lambda *args: Tensor(np.nan))
        with pytest.raises(DivergenceError) as info:
            train_stage1(tiny_config(tmp_path), tiny_dataset)
        assert info.value.step == 1
        assert info.value.checkpoint_path.name == "stage1_last_finite.json"
        saved = Checkpoint.load(info.value.checkpoint_path)
        assert saved.header.step == 0
        assert all(np.all(np.isfinite(v)) for v in saved.parameters.values())


# =============================================================================
# Stage 2
# =============================================================================

class TestStage2:

    def test_outputs_and_frozen_encoder(self, stage1_run, tiny_dataset, tmp_path):
        cfg = tiny_config(tmp_path, stage=2, batch_size=4, iterations=2)
        result = train_stage2(cfg, stage1_run.checkpoint_path, tiny_dataset)

        frame = pd.read_csv(result.log_path)
        assert result.log_path.name == "losses.csv"
        assert tuple(frame.columns) == STAGE2_COLUMNS
        assert len(frame) == 2
        assert np.all(np.isfinite(frame.drop(columns="step").to_numpy()))
        assert result.head is not None

        before = stage1_run.checkpoint.state_for("encoder")
        after = result.checkpoint.state_for("encoder")
        assert before.keys() == after.keys()
        for name in before:
            np.testing.assert_array_equal(before[name], after[name])
        assert result.checkpoint.state_for("fusion")

    def test_inactive_terms_are_logged_as_zero(self, stage1_run, tiny_dataset, tmp_path):
        cfg = tiny_config(tmp_path, stage=2, batch_size=4, iterations=1, weights=LossWeights.preset("baseline"))
        frame = pd.read_csv(train_stage2(cfg, stage1_run.checkpoint, tiny_dataset).log_path)
        assert frame.loc[0, "L_clip"] == 0.0
        assert frame.loc[0, "L_supcon"] == 0.0
        assert frame.loc[0, "L_sty"] > 0.0

    def test_zero_weights_leave_fusion_at_init(self, stage1_run, tiny_dataset, tmp_path):
        silent = LossWeights(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        cfg = tiny_config(tmp_path, stage=2, batch_size=4, iterations=2, weights=silent)
        result = train_stage2(cfg, stage1_run.checkpoint, tiny_dataset)
        initial = StyleNet(cfg.network_config(tiny_dataset.codebook.dim)).fusion.state_dict()
        trained = result.checkpoint.state_for("fusion")
        assert trained.keys() == initial.keys()
        for name in initial:
            np.testing.assert_array_equal(trained[name], initial[name])
        assert (pd.read_csv(result.log_path)["total"] == 0.0).all()

    def test_reruns_are_bitwise_identical(self, stage1_run, tiny_dataset, tmp_path):
        logs = []
        for name in ("a", "b"):
            cfg = tiny_config(tmp_path / name, stage=2, batch_size=4, iterations=2)
            logs.append(train_stage2(cfg, stage1_run.checkpoint, tiny_dataset).log_path.read_bytes())
        assert logs[0] == logs[1]

    def test_manifest_hash_mismatch(self, stage1_run, tiny_dataset, tmp_path):
        foreign = replace(stage1_run.checkpoint, header=replace(stage1_run.checkpoint.header, manifest_hash="0" * 64))
        cfg = tiny_config(tmp_path, stage=2, batch_size=4, iterations=1)
        with pytest.raises(ConfigurationError):
            train_stage2(cfg, foreign, tiny_dataset)

    def test_batch_of_one_rejected(self, stage1_run, tiny_dataset, tmp_path):
        with pytest.raises(ConfigurationError):
            train_stage2(tiny_config(tmp_path, stage=2, batch_size=1), stage1_run.checkpoint, tiny_dataset)

    def test_restore_network_from_stage1(self, stage1_run):
        net = restore_network(stage1_run.checkpoint, fusion_variant="attn_adain")
        assert net.tag.value == "attn_adain"
        for name, value in stage1_run.checkpoint.state_for("decoder").items():
            np.testing.assert_array_equal(net.decoder.state_dict()[name], value)


# =============================================================================
# Style objective
# =============================================================================

def _class_spread(rows: np.ndarray, labels: np.ndarray) -> list:
    """Distance between the unit directions of the two rows of each class."""
    unit = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    return [float(np.linalg.norm(np.subtract(*unit[labels == c]))) for c in np.unique(labels)]


class TestStyleObjective:

    def test_supcon_step_pulls_each_class_together(self):
        angles = np.radians([-20.0, 20.0, 160.0, 200.0])
        labels = np.array([0, 0, 1, 1])
        rows = Parameter(np.stack([np.cos(angles), np.sin(angles)], axis=1))
        supcon_loss(ContrastiveBatch(l2_normalize(rows), labels, temperature=0.5)).backward()

        before = _class_spread(rows.data, labels)
        rows.data -= 0.05 * rows.grad
        after = _class_spread(rows.data, labels)
        assert after[0] < before[0] and after[1] < before[1]


@pytest.mark.slow
class TestAblationTrend:

    PRESETS = ("baseline", "clip", "clip_supcon")

    @pytest.fixture(scope="class")
    def style_scores(self, tiny_dataset, tmp_path_factory):
        root = tmp_path_factory.mktemp("ablation")
        stage1 = train_stage1(tiny_config(root / "stage1", iterations=200), tiny_dataset)
        classifier = train_deception_classifier(tiny_dataset, steps=300, persist=False)
        scores = {}
        for name in self.PRESETS:
            cfg = tiny_config(root / name, stage=2, batch_size=4, iterations=100, weights=LossWeights.preset(name))
            net = train_stage2(cfg, stage1.checkpoint, tiny_dataset).net
            scores[name] = evaluate(net, tiny_dataset, classifier).means["s_style"]
        return scores

    def test_style_score_rises_with_each_term(self, style_scores):
        assert style_scores["baseline"] < style_scores["clip"] < style_scores["clip_supcon"]
