"""Minimal indexed-colour PNG writer.

Writes palette-based PNGs (colour type 3) at bit depth 1, 2, 4 or 8 with
no external imaging dependency: signature, IHDR, PLTE, one zlib IDAT of
filter-0 scanlines, IEND.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

PNG_SIGNATURE = bytes([137, 80, 78, 71, 13, 10, 26, 10])


def bit_depth_for(n_colours: int) -> int:
    """Smallest PNG palette bit depth ({1, 2, 4, 8}) holding n_colours entries."""
    if n_colours < 1:
        raise ValueError("palette must be non-empty")
    for depth in (1, 2, 4, 8):
        if n_colours <= 1 << depth:
            return depth
    raise ValueError(f"indexed PNG supports at most 256 colours, got {n_colours}")


def palette_to_uint8(palette: np.ndarray) -> np.ndarray:
    pal = np.asarray(palette, dtype=np.float64)
    if pal.ndim != 2 or pal.shape[1] != 3:
        raise ValueError("palette must be K x 3")
    return np.clip(np.round(pal * 255.0), 0, 255).astype(np.uint8)


def _chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(data, zlib.crc32(tag)))
    )


def _pack_scanlines(indices: np.ndarray, depth: int) -> bytes:
    h, w = indices.shape
    if depth == 8:
        rows = indices.astype(np.uint8)
        filtered = np.concatenate([np.zeros((h, 1), np.uint8), rows], axis=1)
        return filtered.tobytes()
    # expand each index to `depth` bits, MSB first, then pack per scanline
    shifts = np.arange(depth - 1, -1, -1)
    bits = ((indices[..., None] >> shifts) & 1).astype(np.uint8).reshape(h, w * depth)
    packed = np.packbits(bits, axis=1)  # pads the final byte of each row with zeros
    return np.concatenate([np.zeros((h, 1), np.uint8), packed], axis=1).tobytes()


def write_indexed_png(path, indices: np.ndarray, palette: np.ndarray) -> int:
    """Write an indexed-colour PNG; returns the bit depth used.

    ``indices`` is an H x W integer map into ``palette`` (K x 3 floats in
    [0, 1] or uint8). The bit depth is the smallest of {1, 2, 4, 8} that
    holds K entries.
    """
    idx = np.asarray(indices)
    if idx.ndim != 2:
        raise ValueError("index map must be H x W")
    pal = np.asarray(palette)
    pal8 = pal if pal.dtype == np.uint8 else palette_to_uint8(pal)
    if idx.min() < 0 or idx.max() >= len(pal8):
        raise ValueError("index map refers outside the palette")
    depth = bit_depth_for(len(pal8))

    h, w = idx.shape
    ihdr = struct.pack(">IIBBBBB", w, h, depth, 3, 0, 0, 0)
    idat = zlib.compress(_pack_scanlines(idx.astype(np.int64), depth), 9)
    with open(path, "wb") as f:
        f.write(PNG_SIGNATURE)
        f.write(_chunk(b"IHDR", ihdr))
        f.write(_chunk(b"PLTE", pal8.tobytes()))
        f.write(_chunk(b"IDAT", idat))
        f.write(_chunk(b"IEND", b""))
    return depth
