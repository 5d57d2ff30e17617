import numpy as np
import pytest
from PIL import Image

from cqlab.pngio import bit_depth_for, palette_to_uint8, write_indexed_png


@pytest.mark.parametrize(
    "n,depth",
    [(1, 1), (2, 1), (3, 2), (4, 2), (5, 4), (16, 4), (17, 8), (256, 8)],
)
def test_bit_depth_rounding(n, depth):
    assert bit_depth_for(n) == depth


def test_bit_depth_rejects_oversize():
    with pytest.raises(ValueError):
        bit_depth_for(257)


@pytest.mark.parametrize("n_colours", [2, 3, 4, 7, 16, 40, 256])
def test_round_trip_against_pillow(tmp_path, n_colours):
    """Independent decode oracle: Pillow must recover indices and palette."""
    rng = np.random.default_rng(n_colours)
    indices = rng.integers(0, n_colours, size=(13, 17))
    palette = rng.random((n_colours, 3))
    path = tmp_path / "img.png"
    depth = write_indexed_png(path, indices, palette)

    with Image.open(path) as im:
        assert im.mode == "P"
        decoded = np.asarray(im)
        pal_bytes = im.getpalette()
    assert np.array_equal(decoded, indices)
    expected = palette_to_uint8(palette)
    got = np.array(pal_bytes[: n_colours * 3], dtype=np.uint8).reshape(-1, 3)
    assert np.array_equal(got, expected)
    assert depth == bit_depth_for(n_colours)


def test_decoded_pixels_match_quantised_image(tmp_path):
    """Painting the decoded indices with the decoded palette reproduces the
    8-bit view of the in-memory quantised image exactly."""
    rng = np.random.default_rng(0)
    palette = rng.random((4, 3))
    indices = rng.integers(0, 4, size=(9, 9))
    in_memory = palette[indices]
    path = tmp_path / "q.png"
    write_indexed_png(path, indices, palette)

    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"))
    assert np.array_equal(rgb, palette_to_uint8(palette)[indices])
    assert np.array_equal(rgb, np.clip(np.round(in_memory * 255), 0, 255).astype(np.uint8))


def test_odd_widths_pack_correctly(tmp_path):
    # widths that do not fill the final byte at depths 1/2/4
    for n_colours, w in [(2, 11), (4, 9), (16, 5)]:
        indices = np.arange(w * 3).reshape(3, w) % n_colours
        palette = np.linspace(0, 1, n_colours * 3).reshape(n_colours, 3)
        path = f"/tmp/pack_{n_colours}_{w}.png"
        write_indexed_png(path, indices, palette)
        with Image.open(path) as im:
            assert np.array_equal(np.asarray(im), indices)


def test_rejects_bad_indices(tmp_path):
    with pytest.raises(ValueError):
        write_indexed_png(tmp_path / "bad.png", np.array([[0, 5]]), np.zeros((2, 3)))
