"""
Tests for the evaluation metrics, the style classifier, the correlation
analysis and the evaluation report.
"""

import json

import numpy as np
import pandas as pd
import pytest

from errors import EvaluationError, ShapeError
from styleset import StyleRef
from training import (
    CorrelationResult,
    DeceptionClassifier,
    EvalReport,
    ImageScores,
    clip_scores,
    correlation_matrix,
    deception_rate,
    evaluate,
    load_classifier,
    per_class_deception,
    ssim,
    train_deception_classifier,
)


class FixedClassifier:
    """Predicts a preset class per image, in order."""

    def __init__(self, predictions):
        self.predictions = np.asarray(predictions)

    def predict(self, images):
        return self.predictions[: len(images)]


@pytest.fixture(scope="module")
def classifier(tiny_dataset):
    return train_deception_classifier(tiny_dataset, steps=300, persist=False)


def _report(correlation, **overrides):
    values = dict(
        images=[ImageScores(0, 0, 0.9, 0.4, 0.7)],
        deception_rate=0.5,
        correlation=correlation,
    )
    values.update(overrides)
    return EvalReport(**values)


@pytest.fixture
def uniform_correlation():
    return CorrelationResult(scores=np.full((4, 2), 0.5), labels=np.array([0, 0, 1, 1]), class_ids=[0, 1])


# =============================================================================
# SSIM
# =============================================================================

class TestSsim:

    def test_identical_images(self, rng):
        image = rng.uniform(0.0, 1.0, (3, 16, 16))
        assert ssim(image, image) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_and_below_one(self, rng):
        a = rng.split(0).uniform(0.0, 1.0, (3, 16, 16))
        b = rng.split(1).uniform(0.0, 1.0, (3, 16, 16))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
        assert ssim(a, b) < 0.5

    def test_inverted_image_scores_below_noisy_copy(self, rng):
        image = rng.split(0).uniform(0.0, 1.0, (3, 16, 16))
        noisy = np.clip(image + 0.05 * rng.split(1).normal(image.shape), 0.0, 1.0)
        assert ssim(image, 1.0 - image) < ssim(image, noisy)

    def test_small_image_uses_global_window(self, rng):
        image = rng.uniform(0.0, 1.0, (3, 4, 4))
        assert ssim(image, image) == pytest.approx(1.0, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 16, 16)))


# =============================================================================
# Deception rate
# =============================================================================

class TestDeception:

    def test_empty_set_is_an_error(self):
        with pytest.raises(EvaluationError):
            deception_rate([], FixedClassifier([]))

    def test_fraction_of_hits(self):
        stylized = [(np.zeros((3, 4, 4)), c) for c in (0, 0, 1, 1)]
        assert deception_rate(stylized, FixedClassifier([0, 1, 1, 1])) == pytest.approx(0.75)

    def test_random_classifier_rate_is_one_over_classes(self, rng):
        classes, count = 4, 8000
        stylized = [(np.zeros((3, 4, 4)), i % classes) for i in range(count)]
        guesses = FixedClassifier(rng.integers(0, classes, count))
        assert deception_rate(stylized, guesses) == pytest.approx(1.0 / classes, abs=0.02)

    def test_per_class_rates(self):
        stylized = [(np.zeros((3, 4, 4)), c) for c in (0, 0, 1, 1)]
        rates = per_class_deception(stylized, FixedClassifier([0, 1, 1, 1]), [0, 1, 2])
        assert rates == {0: 0.5, 1: 1.0}

    def test_classifier_recognises_real_paintings(self, classifier, tiny_dataset):
        stylized = [(p, p.class_id) for p in tiny_dataset.paintings]
        assert deception_rate(stylized, classifier) == pytest.approx(classifier.accuracy)
        assert classifier.history[-1] < classifier.history[0]

    def test_classifier_round_trip(self, classifier, tiny_dataset):
        images = [p.pixels for p in tiny_dataset.paintings]
        restored = DeceptionClassifier.from_dict(json.loads(json.dumps(classifier.to_dict())))
        np.testing.assert_array_equal(restored.predict(images), classifier.predict(images))

    def test_classifier_training_is_deterministic(self, classifier, tiny_dataset):
        again = train_deception_classifier(tiny_dataset, steps=300, persist=False)
        np.testing.assert_array_equal(again.weight, classifier.weight)

    def test_load_reads_persisted_classifier(self, tiny_dataset, monkeypatch, classifier):
        monkeypatch.setattr(tiny_dataset.manifest, "classifier", classifier.to_dict())
        loaded = load_classifier(tiny_dataset)
        np.testing.assert_array_equal(loaded.bias, classifier.bias)


# =============================================================================
# Joint-space scores and correlation
# =============================================================================

class TestScores:

    def test_unchanged_image_has_full_content_score(self, tiny_dataset):
        content = tiny_dataset.contents[0]
        s_cont, s_style = clip_scores(content, content, StyleRef.text(0), tiny_dataset.embedder)
        assert s_cont == pytest.approx(1.0, abs=1e-12)
        assert -1.0 <= s_style <= 1.0

    def test_correlation_rows_sum_to_one(self, tiny_dataset, tmp_path):
        result = correlation_matrix(tiny_dataset.paintings, tiny_dataset.classes, tiny_dataset.embedder)
        assert result.scores.shape == (6, 2)
        np.testing.assert_allclose(result.scores.sum(axis=1), 1.0, atol=1e-12)
        assert 0.0 <= result.accuracy <= 1.0

        frame = pd.read_csv(result.to_csv(tmp_path / "correlation.csv"))
        assert list(frame.columns) == ["painting", "true_class", "style-0", "style-1", "argmax"]
        assert len(frame) == 6


# =============================================================================
# Report
# =============================================================================

class TestReport:

    def test_valid_report(self, uniform_correlation, tmp_path):
        report = _report(uniform_correlation).validate()
        path = report.save(tmp_path)
        data = json.loads(path.read_text())
        assert data["means"]["s_cont"] == pytest.approx(0.9)
        assert (tmp_path / "correlation.csv").is_file()

    def test_rate_outside_unit_interval(self, uniform_correlation):
        with pytest.raises(EvaluationError):
            _report(uniform_correlation, deception_rate=1.5).validate()

    def test_non_finite_score(self, uniform_correlation):
        with pytest.raises(EvaluationError):
            _report(uniform_correlation, images=[ImageScores(0, 0, np.nan, 0.1, 0.2)]).validate()

    def test_rows_not_summing_to_one(self):
        broken = CorrelationResult(scores=np.full((2, 2), 0.4), labels=np.array([0, 1]), class_ids=[0, 1])
        with pytest.raises(EvaluationError):
            _report(broken).validate()

    def test_empty_report(self, uniform_correlation):
        with pytest.raises(EvaluationError):
            _report(uniform_correlation, images=[]).validate()

    def test_evaluate_untrained_network(self, tiny_net, tiny_dataset, classifier, tmp_path):
        report = evaluate(tiny_net, tiny_dataset, classifier, config_hash="abc", image_dir=tmp_path)
        assert len(report.images) == len(tiny_dataset.holdout_contents) * tiny_dataset.num_classes
        assert report.fusion_variant == "ssm_adaln"
        assert 0.0 <= report.deception_rate <= 1.0
        assert -1.0 <= report.reconstruction_ssim <= 1.0
        assert len(list(tmp_path.glob("stylized_*.png"))) == len(report.images)
