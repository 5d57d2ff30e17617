import math

import numpy as np
import pytest
import torch

from cqlab.colour import hsv_to_cone
from cqlab.objectives import (
    LossReport,
    LossWeights,
    central_colour_reg,
    central_embedding_loss,
    diversity_reg,
    full_embedding_loss,
    intra_cluster_colour_reg,
    machine_loss,
    perceptual_loss,
    pixelwise_cross_entropy,
    total_loss,
)


# ---------------------------------------------------------------------------
# independent numpy oracles


def brute_force_diversity(m_hwc):
    c = m_hwc.shape[-1]
    total = 0.0
    for ch in range(c):
        total += m_hwc[..., ch].max()
    return math.log2(c) * (1.0 - total / c)


def brute_force_intra_cluster(hsv_hwc, assignment, n_colours):
    cone = hsv_to_cone(hsv_hwc).reshape(-1, 3)
    flat = assignment.reshape(-1)
    acc = 0.0
    for c in range(n_colours):
        members = cone[flat == c]
        if len(members) == 0:
            continue
        centroid = members.mean(axis=0)
        acc += np.mean(np.sum((members - centroid) ** 2, axis=1))
    return acc / n_colours


def brute_force_central(hsv_hwc, assignment, centres_hv):
    # squared distance with s1 = s2 = 1
    flat_hsv = hsv_hwc.reshape(-1, 3)
    flat = assignment.reshape(-1)
    acc = 0.0
    for c in range(len(centres_hv)):
        members = flat_hsv[flat == c]
        if len(members) == 0:
            continue
        h1, v1 = members[:, 0], members[:, 2]
        h2, v2 = centres_hv[c]
        d2 = (v2 - v1) ** 2 + v1**2 + v2**2 - 2 * v1 * v2 * np.cos(h2 - h1)
        acc += d2.mean()
    return acc / len(centres_hv)


def to_bchw(hwc):
    return torch.from_numpy(hwc).permute(2, 0, 1).unsqueeze(0)


# ---------------------------------------------------------------------------


class TestMachineLoss:
    def test_aligned_large_logits(self):
        logits = torch.tensor([50.0, 0.0, 0.0])
        assert machine_loss(logits, torch.tensor(0)).item() < 1e-12

    def test_uniform_logits(self):
        for k in (2, 5, 10):
            loss = machine_loss(torch.zeros(k), torch.tensor(1 % k))
            assert loss.item() == pytest.approx(math.log(k), rel=1e-6)

    def test_hand_evaluated(self):
        loss = machine_loss(torch.tensor([2.0, 1.0, 0.0]), torch.tensor(0))
        assert loss.item() == pytest.approx(0.40760596444438079, abs=1e-6)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            machine_loss(torch.zeros(3), torch.tensor(3))


class TestDiversity:
    def test_one_hot_full_use_is_zero(self):
        m = torch.zeros(1, 3, 1, 3)
        for c in range(3):
            m[0, c, 0, c] = 1.0
        assert diversity_reg(m).item() == pytest.approx(0.0, abs=1e-12)

    def test_uniform_map(self):
        m = torch.full((1, 4, 5, 5), 0.25)
        assert diversity_reg(m).item() == pytest.approx(1.5, abs=1e-6)

    def test_given_channel_maxima(self):
        # per-channel maxima (1.0, 0.5) -> 1 * (1 - 0.75) = 0.25
        m = torch.tensor([[[[1.0, 0.5]], [[0.0, 0.5]]]])
        assert diversity_reg(m).item() == pytest.approx(0.25, abs=1e-7)

    def test_bounds_and_oracle(self):
        rng = np.random.default_rng(0)
        for c in (2, 3, 5):
            raw = rng.random((4, 4, c))
            m_hwc = raw / raw.sum(-1, keepdims=True)
            got = diversity_reg(to_bchw(m_hwc)).item()
            assert got == pytest.approx(brute_force_diversity(m_hwc), rel=1e-9)
            assert -1e-12 <= got <= math.log2(c) * (1 - 1 / c) + 1e-12

    def test_upper_bound_attained_by_uniform(self):
        for c in (2, 4, 8):
            m = torch.full((1, c, 3, 3), 1.0 / c)
            assert diversity_reg(m).item() == pytest.approx(
                math.log2(c) * (1 - 1 / c), rel=1e-6
            )

    def test_requires_two_colours(self):
        with pytest.raises(ValueError):
            diversity_reg(torch.ones(1, 1, 2, 2))


class TestPerceptual:
    def test_identical_images(self):
        x = torch.rand(1, 3, 4, 4)
        assert perceptual_loss(x, x).item() == 0.0

    def test_unit_range(self):
        assert perceptual_loss(torch.zeros(1, 3, 2, 2), torch.ones(1, 3, 2, 2)).item() == 1.0

    def test_constant_offset(self):
        x = torch.rand(1, 3, 4, 4, dtype=torch.float64) * 0.8
        assert perceptual_loss(x + 0.1, x).item() == pytest.approx(0.01, rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            perceptual_loss(torch.zeros(1, 3, 2, 2), torch.zeros(1, 3, 2, 3))


class TestIntraCluster:
    def test_monochromatic_clusters_zero(self):
        hsv = np.zeros((2, 4, 3))
        hsv[:, :2] = [1.0, 0.5, 0.5]
        hsv[:, 2:] = [2.0, 0.8, 0.9]
        assignment = np.array([[0, 0, 1, 1], [0, 0, 1, 1]])
        got = intra_cluster_colour_reg(
            to_bchw(hsv), torch.from_numpy(assignment).unsqueeze(0), 2
        )
        assert got.item() == pytest.approx(0.0, abs=1e-12)

    def test_two_achromatic_pixels(self):
        # s=0 pixels at v=0 and v=1: cone points (0,0,0) and (0,0,1),
        # centroid (0,0,0.5), both squared distances 0.25
        hsv = np.array([[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]])
        assignment = np.zeros((1, 2), dtype=np.int64)
        got = intra_cluster_colour_reg(
            to_bchw(hsv), torch.from_numpy(assignment).unsqueeze(0), 1
        )
        assert got.item() == pytest.approx(0.25, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        hsv = np.stack(
            [rng.uniform(0, 2 * np.pi, (4, 4)), rng.random((4, 4)), rng.random((4, 4))],
            axis=-1,
        )
        assignment = rng.integers(0, 3, (4, 4))
        got = intra_cluster_colour_reg(
            to_bchw(hsv), torch.from_numpy(assignment).unsqueeze(0), 3
        )
        assert got.item() == pytest.approx(brute_force_intra_cluster(hsv, assignment, 3), rel=1e-9)

    def test_empty_cluster_contributes_zero(self):
        hsv = np.zeros((1, 2, 3))
        hsv[0, 0] = [0.0, 1.0, 1.0]
        hsv[0, 1] = [np.pi, 1.0, 1.0]
        assignment = np.zeros((1, 2), dtype=np.int64)
        # cluster variance of the pair is 1 (two cone points distance 2 apart);
        # spreading over C=4 with three empty clusters divides by 4
        got = intra_cluster_colour_reg(
            to_bchw(hsv), torch.from_numpy(assignment).unsqueeze(0), 4
        )
        assert got.item() == pytest.approx(1.0 / 4.0, abs=1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            hsv = np.stack(
                [rng.uniform(0, 2 * np.pi, (3, 3)), rng.random((3, 3)), rng.random((3, 3))],
                axis=-1,
            )
            assignment = rng.integers(0, 2, (3, 3))
            got = intra_cluster_colour_reg(
                to_bchw(hsv), torch.from_numpy(assignment).unsqueeze(0), 2
            )
            assert got.item() >= -1e-12


class TestTotalLoss:
    def test_weighted_sum_example(self):
        total, report = total_loss(
            torch.tensor(1.0), 0.5, 0.25, 0.01, LossWeights(1.0, 0.3, 1.0)
        )
        assert report.total == pytest.approx(1.585, abs=1e-9)
        assert total.item() == pytest.approx(1.585, rel=1e-6)

    def test_zero_weights_reduce_to_machine(self):
        total, report = total_loss(torch.tensor(0.7), 9.0, 9.0, 9.0, LossWeights(0, 0, 0))
        assert report.total == report.machine

    def test_zero_perceptual_terms(self):
        total, report = total_loss(torch.tensor(1.3), 0.0, 0.0, 0.0)
        assert report.total == pytest.approx(report.machine, abs=1e-12)

    def test_report_invariant(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            lm, rc, rd, lp = rng.random(4)
            w = LossWeights(*rng.random(3))
            _, report = total_loss(torch.tensor(lm), rc, rd, lp, w)
            assert abs(
                report.total
                - (report.machine + w.alpha * report.colour + w.beta * report.diversity
                   + w.gamma * report.perceptual)
            ) <= 1e-9

    def test_linearity_in_beta(self):
        _, r1 = total_loss(torch.tensor(1.0), 0.4, 0.3, 0.2, LossWeights(1.0, 0.3, 1.0))
        _, r2 = total_loss(torch.tensor(1.0), 0.4, 0.3, 0.2, LossWeights(1.0, 0.6, 1.0))
        assert (r2.total - r1.total) == pytest.approx(0.3 * 0.3, abs=1e-12)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(-0.1, 0.3, 1.0)


class TestFullEmbedding:
    def test_matching_one_hot_maps(self):
        m = torch.zeros(1, 3, 2, 2)
        m[0, 1] = 1.0
        _, term = full_embedding_loss(m, m.clone(), torch.zeros(1, 2), torch.tensor([0]))
        assert term.item() == pytest.approx(0.0, abs=1e-9)

    def test_uniform_target_uniform_prediction(self):
        c = 3
        m = torch.full((1, c, 2, 2), 1.0 / c)
        _, term = full_embedding_loss(m, m.clone(), torch.zeros(1, 2), torch.tensor([0]))
        assert term.item() == pytest.approx(math.log(c), rel=1e-6)

    def test_published_distribution_against_uniform_prediction(self):
        target = torch.tensor([0.09, 0.04, 0.87]).view(1, 3, 1, 1)
        m = torch.full((1, 3, 1, 1), 1.0 / 3.0)
        _, term = full_embedding_loss(m, target, torch.zeros(1, 2), torch.tensor([0]))
        assert term.item() == pytest.approx(math.log(3.0), rel=1e-6)

    def test_cross_entropy_minimised_at_target(self):
        rng = np.random.default_rng(4)
        raw = rng.random((2, 2, 3))
        target_hwc = raw / raw.sum(-1, keepdims=True)
        target = to_bchw(target_hwc)
        at_target = pixelwise_cross_entropy(target, target).item()
        for _ in range(10):
            raw2 = rng.random((2, 2, 3))
            other = to_bchw(raw2 / raw2.sum(-1, keepdims=True))
            assert pixelwise_cross_entropy(other, target).item() >= at_target - 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            full_embedding_loss(
                torch.ones(1, 2, 2, 2), torch.ones(1, 3, 2, 2), torch.zeros(1, 2), torch.tensor([0])
            )


class TestCentralEmbedding:
    def test_pixels_at_their_centres(self):
        centres = torch.tensor([[0.5, 0.3], [2.0, 0.8]])
        hsv = np.zeros((1, 2, 3))
        hsv[0, 0] = [0.5, 1.0, 0.3]
        hsv[0, 1] = [2.0, 1.0, 0.8]
        assignment = np.array([[0, 1]])
        _, term = central_embedding_loss(
            to_bchw(hsv), torch.from_numpy(assignment).unsqueeze(0), centres,
            torch.zeros(1, 2), torch.tensor([0]),
        )
        assert term.item() == pytest.approx(0.0, abs=1e-9)

    def test_opposite_hue_unit_value(self):
        # pixel (h=0, v=1) against centre (h=pi, v=1) with s forced to 1 -> 4
        centres = torch.tensor([[math.pi, 1.0]])
        hsv = np.array([[[0.0, 0.2, 1.0]]])  # saturation must be ignored
        assignment = np.zeros((1, 1), dtype=np.int64)
        got = central_colour_reg(
            to_bchw(hsv), torch.from_numpy(assignment).unsqueeze(0), centres
        )
        assert got.item() == pytest.approx(4.0, abs=1e-7)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        hsv = np.stack(
            [rng.uniform(0, 2 * np.pi, (2, 2)), rng.random((2, 2)), rng.random((2, 2))],
            axis=-1,
        )
        assignment = rng.integers(0, 2, (2, 2))
        centres = np.array([[0.3, 0.9], [4.0, 0.2]])
        got = central_colour_reg(
            to_bchw(hsv), torch.from_numpy(assignment).unsqueeze(0), torch.from_numpy(centres)
        )
        assert got.item() == pytest.approx(brute_force_central(hsv, assignment, centres), rel=1e-9)
