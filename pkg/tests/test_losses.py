"""
Tests for the loss stack: contrastive oracles, the directional loss,
feature-space losses, weighting and the loss log.
"""

import numpy as np
import pytest

from errors import ConfigurationError, DegenerateInputWarning, NonFiniteError, ShapeError
from losses import (
    ABLATION_PRESETS,
    LOSS_TERMS,
    STAGE2_COLUMNS,
    ContrastiveBatch,
    LossLog,
    LossWeights,
    ProjectionHead,
    content_loss,
    directional_clip_loss,
    normalized_gram,
    perceptual_loss,
    style_gram_loss,
    supcon_loss,
    supcon_total,
    total_loss,
    unsup_contrastive_loss,
)
from model import Encoder
from tensor import RngStream, Tensor, l2_normalize


def brute_force_supcon(z: np.ndarray, labels: np.ndarray, temperature: float) -> float:
    """The defining double sum, one anchor and one positive at a time."""
    n = len(labels)
    total = 0.0
    for i in range(n):
        positives = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not positives:
            continue
        denominator = sum(np.exp(z[i] @ z[k] / temperature) for k in range(n) if k != i)
        total -= sum(np.log(np.exp(z[i] @ z[p] / temperature) / denominator) for p in positives) / len(positives)
    return total


# =============================================================================
# Supervised contrastive loss
# =============================================================================

class TestSupCon:

    def test_identical_embeddings_oracle(self):
        z = np.tile(np.array([[0.6, 0.8]]), (6, 1))
        loss = supcon_loss(ContrastiveBatch(Tensor(z), [0, 0, 1, 1, 2, 2], temperature=0.1))
        assert loss.item() == pytest.approx(9.656627474604601, rel=1e-12)
        assert loss.item() == pytest.approx(6 * np.log(5), rel=1e-12)

    @pytest.mark.filterwarnings("ignore::errors.DegenerateInputWarning")
    @pytest.mark.parametrize("batch", range(30))
    def test_matches_brute_force(self, batch):
        rng = RngStream(5).split(batch)
        n = int(rng.split(0).integers(2, 10))
        labels = rng.split(1).integers(0, 3, n)
        z = rng.split(2).normal((n, 4))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        temperature = float(rng.split(3).uniform(0.05, 1.0))
        loss = supcon_loss(ContrastiveBatch(Tensor(z), labels, temperature)).item()
        assert loss == pytest.approx(brute_force_supcon(z, labels, temperature), rel=1e-9, abs=1e-12)

    def test_permutation_invariant(self, unit_rows):
        labels = np.array([0, 1, 0, 2, 1, 2])
        order = np.array([3, 0, 5, 1, 4, 2])
        a = supcon_loss(ContrastiveBatch(Tensor(unit_rows), labels, 0.2)).item()
        b = supcon_loss(ContrastiveBatch(Tensor(unit_rows[order]), labels[order], 0.2)).item()
        assert a == pytest.approx(b, rel=1e-12)

    def test_closer_positive_pair_lowers_the_loss(self):
        labels = np.array([0, 0, 1, 1, 2, 2])
        losses = []
        for degrees in (80.0, 50.0, 20.0):
            z = np.eye(6)
            z[1] = np.cos(np.radians(degrees)) * z[0] + np.sin(np.radians(degrees)) * np.eye(6)[1]
            losses.append(supcon_loss(ContrastiveBatch(Tensor(z), labels, 0.2)).item())
        assert losses[0] > losses[1] > losses[2]

    def test_lonely_anchor_warns_and_contributes_zero(self, unit_rows):
        labels = np.array([0, 0, 1, 1, 2, 3])
        with pytest.warns(DegenerateInputWarning):
            loss = supcon_loss(ContrastiveBatch(Tensor(unit_rows), labels, 0.5)).item()
        assert loss == pytest.approx(brute_force_supcon(unit_rows, labels, 0.5), rel=1e-9)

    def test_mean_reduction(self, unit_rows):
        labels = np.array([0, 0, 1, 1, 2, 2])
        batch = ContrastiveBatch(Tensor(unit_rows), labels, 0.5)
        assert supcon_loss(batch, "mean").item() == pytest.approx(supcon_loss(batch, "sum").item() / 6)

    def test_batch_validation(self, unit_rows):
        with pytest.raises(ShapeError):
            ContrastiveBatch(Tensor(unit_rows), [0, 1, 2])
        with pytest.raises(ShapeError):
            ContrastiveBatch(Tensor(unit_rows[:1]), [0])
        with pytest.raises(ConfigurationError):
            ContrastiveBatch(Tensor(unit_rows), np.zeros(6), temperature=0.0)

    def test_three_way_total(self, rng):
        head = ProjectionHead(4, 8, rng.split(0))
        rows = [l2_normalize(Tensor(rng.split(i).normal((4, 4)))) for i in (1, 2, 3)]
        labels = [0, 0, 1, 1]
        total = supcon_total(*rows, labels, head, temperature=0.5).item()
        img, txt, sty = (head(r) for r in rows)
        expected = sum(
            supcon_loss(ContrastiveBatch.pair(a, b, labels, 0.5)).item()
            for a, b in ((img, txt), (sty, txt), (sty, img))
        )
        assert total == pytest.approx(expected, rel=1e-12)

    def test_three_way_total_needs_aligned_rows(self, rng):
        head = ProjectionHead(4, 8, rng)
        with pytest.raises(ShapeError):
            supcon_total(np.ones((4, 4)), np.ones((3, 4)), np.ones((4, 4)), [0, 0, 1, 1], head)

    def test_projection_head_outputs_unit_rows(self, rng):
        out = ProjectionHead(4, 8, rng)(Tensor(rng.normal((5, 4))))
        np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-12)


# =============================================================================
# Unsupervised contrastive loss
# =============================================================================

class TestUnsup:

    def test_pairs_are_positives(self, unit_rows):
        first, second = Tensor(unit_rows[:3]), Tensor(unit_rows[3:])
        expected = supcon_loss(ContrastiveBatch.pair(first, second, np.arange(3), 0.1)).item()
        assert unsup_contrastive_loss((first, second), 0.1).item() == pytest.approx(expected)

    def test_single_pair_warns(self, unit_rows):
        with pytest.warns(DegenerateInputWarning):
            loss = unsup_contrastive_loss([(Tensor(unit_rows[0]), Tensor(unit_rows[1]))])
        assert loss.item() == 0.0


# =============================================================================
# Directional loss
# =============================================================================

class TestDirectional:

    def test_aligned_direction_is_zero(self, unit_rows):
        z_content, t_target, t_null = unit_rows[0], unit_rows[1], unit_rows[2]
        z_out = z_content + 0.5 * (t_target - t_null)
        assert directional_clip_loss(z_out, z_content, t_target, t_null).item() == pytest.approx(0.0, abs=1e-12)

    def test_opposite_direction_is_two(self, unit_rows):
        z_content, t_target, t_null = unit_rows[0], unit_rows[1], unit_rows[2]
        z_out = z_content - (t_target - t_null)
        assert directional_clip_loss(z_out, z_content, t_target, t_null).item() == pytest.approx(2.0, abs=1e-12)

    def test_output_direction_scale_does_not_matter(self, unit_rows):
        z_content, t_target, t_null = unit_rows[0], unit_rows[3], unit_rows[4]
        direction = unit_rows[1] - unit_rows[0]
        reference = directional_clip_loss(z_content + direction, z_content, t_target, t_null).item()
        for scale in (0.1, 3.0, 40.0):
            loss = directional_clip_loss(z_content + scale * direction, z_content, t_target, t_null).item()
            assert loss == pytest.approx(reference, abs=1e-12)

    def test_target_equal_to_null_rejected(self, unit_rows):
        with pytest.raises(ConfigurationError):
            directional_clip_loss(unit_rows[0], unit_rows[1], unit_rows[2], unit_rows[2])

    def test_unchanged_output_warns_and_scores_one(self, unit_rows):
        with pytest.warns(DegenerateInputWarning):
            loss = directional_clip_loss(unit_rows[0], unit_rows[0], unit_rows[1], unit_rows[2])
        assert loss.item() == pytest.approx(1.0)

    def test_batch_mean(self, unit_rows):
        z_content = unit_rows[:2]
        t_target = unit_rows[2:4]
        t_null = unit_rows[4]
        aligned = z_content + (t_target - t_null)
        z_out = np.stack([aligned[0], z_content[1] - (t_target[1] - t_null)])
        assert directional_clip_loss(z_out, z_content, t_target, t_null).item() == pytest.approx(1.0, abs=1e-12)


# =============================================================================
# Feature-space losses
# =============================================================================

class TestFeatureLosses:

    def test_identical_features_have_zero_style_and_content_loss(self, rng):
        encoder = Encoder(8, rng.split(0))
        taps = encoder(rng.split(1).uniform(0.0, 1.0, (2, 3, 16, 16)))
        assert style_gram_loss(taps, taps).item() == 0.0
        assert content_loss(taps, taps).item() == 0.0

    def test_gram_normalization(self, rng):
        f = rng.normal((1, 3, 4, 5))
        expected = f.reshape(3, 20) @ f.reshape(3, 20).T / 60.0
        np.testing.assert_allclose(normalized_gram(Tensor(f)).data[0], expected, atol=1e-14)

    def test_style_loss_broadcasts_single_reference(self, rng):
        out = [Tensor(rng.split(0).normal((3, 2, 4, 4)))]
        ref = [Tensor(rng.split(1).normal((1, 2, 4, 4)))]
        assert style_gram_loss(out, ref).item() > 0.0

    def test_tap_count_mismatch(self, rng):
        a = Tensor(rng.normal((1, 2, 4, 4)))
        with pytest.raises(ShapeError):
            style_gram_loss([a, a], [a])

    def test_perceptual_distance(self, rng):
        encoder = Encoder(8, rng.split(0))
        image = rng.split(1).uniform(0.0, 1.0, (1, 3, 16, 16))
        other = rng.split(2).uniform(0.0, 1.0, (1, 3, 16, 16))
        assert perceptual_loss(image, image, encoder).item() == 0.0
        assert perceptual_loss(image, other, encoder).item() > 0.0

    def test_perceptual_distance_grows_with_noise(self, rng):
        encoder = Encoder(8, rng.split(0))
        image = rng.split(1).uniform(0.2, 0.8, (1, 3, 16, 16))
        noise = rng.split(2).normal(image.shape)
        distances = [perceptual_loss(image + amplitude * noise, image, encoder).item() for amplitude in (0.01, 0.05, 0.2)]
        assert distances[0] < distances[1] < distances[2]


# =============================================================================
# Weights, total and log
# =============================================================================

class TestWeights:

    def test_defaults(self):
        w = LossWeights()
        assert (w.lambda_clip, w.lambda_supcon, w.lambda_sty, w.lambda_con, w.lambda_lpips) == (1.0, 2.0, 50.0, 0.02, 1.0)
        assert w.lambda_unsup == 0.0

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigurationError):
            LossWeights(lambda_sty=-1.0)

    def test_presets(self):
        assert ABLATION_PRESETS["clip_supcon_lpips"] == LossWeights()
        baseline = LossWeights.preset("baseline")
        assert not baseline.active("L_clip") and not baseline.active("L_supcon")
        assert baseline.active("L_sty") and baseline.active("L_con")
        assert LossWeights.preset("clip").active("L_clip")
        with pytest.raises(ConfigurationError):
            LossWeights.preset("everything")

    def test_total_is_weighted_sum(self):
        terms = {name: Tensor(float(i + 1)) for i, name in enumerate(LOSS_TERMS)}
        w = LossWeights(lambda_unsup=0.5)
        expected = 1 * 1.0 + 2 * 2.0 + 3 * 50.0 + 4 * 0.02 + 5 * 1.0 + 6 * 0.5
        assert total_loss(terms, w).item() == pytest.approx(expected)

    def test_total_gradient_is_linear_in_weights(self):
        w = LossWeights(lambda_unsup=0.5)
        doubled = LossWeights(**{"lambda_" + name[len("L_"):]: 2.0 * w.weight(name) for name in LOSS_TERMS})
        for weights in (w, doubled):
            terms = {name: Tensor(float(i + 1), requires_grad=True) for i, name in enumerate(LOSS_TERMS)}
            total_loss(terms, weights).backward()
            for name, term in terms.items():
                assert float(term.grad) == pytest.approx(weights.weight(name))

    def test_non_finite_term_is_named(self):
        with pytest.raises(NonFiniteError, match="L_sty"):
            total_loss({"L_clip": Tensor(0.5), "L_sty": Tensor(np.nan)}, LossWeights())

    def test_unknown_term(self):
        with pytest.raises(ConfigurationError):
            total_loss({"L_style": Tensor(1.0)}, LossWeights())

    def test_log_columns_and_missing_terms(self, tmp_path):
        log = LossLog()
        log.append(1, {"L_clip": 0.5, "total": 0.5})
        frame = LossLog.read_csv(log.to_csv(tmp_path / "losses.csv"))
        assert tuple(frame.columns) == STAGE2_COLUMNS
        assert frame.loc[0, "L_sty"] == 0.0
        assert frame.loc[0, "L_clip"] == 0.5
