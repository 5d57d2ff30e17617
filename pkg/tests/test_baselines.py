import numpy as np
import pytest

from cqlab.baselines import (
    apply_palette,
    floyd_steinberg_dither,
    median_cut,
    nearest_palette_index,
    octree_quantise,
)


def reconstruction_mse(img, palette, index_map):
    return float(np.mean((apply_palette(index_map, palette) - img) ** 2))


def random_image(rng, h=8, w=8):
    return rng.random((h, w, 3))


def image_with_colours(colours, counts, shape):
    """Build an image whose pixel multiset is the given colours repeated."""
    pixels = np.repeat(np.asarray(colours, dtype=np.float64), counts, axis=0)
    assert len(pixels) == shape[0] * shape[1]
    return pixels.reshape(shape[0], shape[1], 3)


class TestMedianCut:
    def test_single_colour_request_gives_global_mean(self):
        rng = np.random.default_rng(0)
        img = random_image(rng)
        palette, index_map = median_cut(img, 1)
        assert palette.shape == (1, 3)
        assert np.allclose(palette[0], img.reshape(-1, 3).mean(axis=0), atol=1e-12)
        assert (index_map == 0).all()

    def test_exact_when_c_matches_distinct(self):
        colours = [(0.1, 0.2, 0.3), (0.9, 0.1, 0.5), (0.4, 0.8, 0.2), (0.0, 0.0, 1.0)]
        img = image_with_colours(colours, [4, 4, 4, 4], (4, 4))
        palette, index_map = median_cut(img, 4)
        assert sorted(map(tuple, palette)) == sorted(colours)
        assert reconstruction_mse(img, palette, index_map) == 0.0

    def test_more_colours_than_distinct(self):
        img = image_with_colours([(0.2, 0.2, 0.2), (0.8, 0.8, 0.8)], [8, 8], (4, 4))
        palette, index_map = median_cut(img, 7)
        assert len(palette) == 2
        assert reconstruction_mse(img, palette, index_map) == 0.0

    def test_spec_four_pixel_split(self):
        # widest range ties across channels -> split on R; lower median
        # keeps both dark pixels left
        img = np.array(
            [[[0.0, 0.0, 0.0], [0.0, 0.0, 0.1]], [[1.0, 1.0, 0.9], [1.0, 1.0, 1.0]]]
        )
        palette, index_map = median_cut(img, 2)
        assert np.allclose(sorted(map(tuple, palette)), [(0.0, 0.0, 0.05), (1.0, 1.0, 0.95)])
        assert index_map[0, 0] == index_map[0, 1]
        assert index_map[1, 0] == index_map[1, 1]
        assert index_map[0, 0] != index_map[1, 0]

    @pytest.mark.parametrize("c", [1, 2, 3, 5, 9])
    def test_mse_never_worse_than_global_mean(self, c):
        rng = np.random.default_rng(c)
        img = random_image(rng, 12, 12)
        mean_palette, mean_map = median_cut(img, 1)
        palette, index_map = median_cut(img, c)
        assert len(palette) <= c
        assert reconstruction_mse(img, palette, index_map) <= reconstruction_mse(
            img, mean_palette, mean_map
        ) + 1e-15

    def test_deterministic(self):
        rng = np.random.default_rng(42)
        img = random_image(rng, 10, 10)
        p1, m1 = median_cut(img, 5)
        p2, m2 = median_cut(img, 5)
        assert np.array_equal(p1, p2) and np.array_equal(m1, m2)

    def test_all_pixels_map_to_palette_rows(self):
        rng = np.random.default_rng(8)
        img = random_image(rng, 6, 6)
        palette, index_map = median_cut(img, 4)
        assert index_map.min() >= 0 and index_map.max() < len(palette)


class TestFloydSteinberg:
    def test_identity_on_palette_image(self):
        palette = np.array([[0.1, 0.2, 0.3], [0.9, 0.8, 0.7]])
        img = apply_palette(np.array([[0, 1], [1, 0]]), palette)
        index_map = floyd_steinberg_dither(img, palette)
        assert np.array_equal(index_map, [[0, 1], [1, 0]])

    def test_hand_traced_pair(self):
        # 0.6 snaps to white, error -0.4 diffuses 7/16 right -> 0.425 snaps to black
        img = np.full((1, 2, 3), 0.6)
        palette = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        index_map = floyd_steinberg_dither(img, palette)
        assert index_map.tolist() == [[1, 0]]

    def test_grey_yields_half_white(self):
        img = np.full((64, 64, 3), 0.5)
        palette = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        index_map = floyd_steinberg_dither(img, palette)
        white_fraction = index_map.mean()
        assert abs(white_fraction - 0.5) < 0.02

    def test_nearest_index_tie_break(self):
        palette = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        assert nearest_palette_index(np.array([0.5, 0.5, 0.5]), palette) == 0

    def test_rejects_empty_palette(self):
        with pytest.raises(ValueError):
            floyd_steinberg_dither(np.zeros((2, 2, 3)), np.zeros((0, 3)))


class TestOctree:
    def test_exact_when_few_distinct(self):
        colours = [(0.05, 0.9, 0.3), (0.7, 0.1, 0.8), (0.33, 0.44, 0.55)]
        img = image_with_colours(colours, [6, 5, 5], (4, 4))
        palette, index_map = octree_quantise(img, 3)
        assert sorted(map(tuple, palette)) == sorted(colours)
        assert reconstruction_mse(img, palette, index_map) == 0.0

    def test_single_colour_request_gives_global_mean(self):
        rng = np.random.default_rng(1)
        img = random_image(rng, 6, 6)
        palette, index_map = octree_quantise(img, 1)
        assert palette.shape == (1, 3)
        assert np.allclose(palette[0], img.reshape(-1, 3).mean(axis=0), atol=1e-9)
        assert (index_map == 0).all()

    def test_two_far_clusters(self):
        # oracle: the two constructed clusters are the 2-means solution
        rng = np.random.default_rng(2)
        a = np.clip(0.15 + 0.02 * rng.standard_normal((32, 3)), 0, 1)
        b = np.clip(0.85 + 0.02 * rng.standard_normal((32, 3)), 0, 1)
        img = np.concatenate([a, b]).reshape(8, 8, 3)
        palette, index_map = octree_quantise(img, 2)
        assert len(palette) == 2
        got = np.array(sorted(map(tuple, palette)))
        want = np.array(sorted([tuple(a.mean(axis=0)), tuple(b.mean(axis=0))]))
        assert np.abs(got - want).max() < 1.0 / 256.0

    def test_palette_never_exceeds_request(self):
        rng = np.random.default_rng(3)
        img = random_image(rng, 10, 10)
        for c in (1, 2, 4, 8, 16):
            palette, index_map = octree_quantise(img, c)
            assert len(palette) <= c
            assert index_map.max() < len(palette)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        img = random_image(rng, 9, 9)
        p1, m1 = octree_quantise(img, 5)
        p2, m2 = octree_quantise(img, 5)
        assert np.array_equal(p1, p2) and np.array_equal(m1, m2)


class TestSharedInvariants:
    @pytest.mark.parametrize("method", [median_cut, octree_quantise])
    def test_output_pixels_are_palette_rows(self, method):
        rng = np.random.default_rng(6)
        img = random_image(rng, 7, 7)
        palette, index_map = method(img, 4)
        recon = apply_palette(index_map, palette)
        unique = {tuple(px) for px in recon.reshape(-1, 3)}
        assert unique <= {tuple(row) for row in palette}
