"""Colour-space primitives: hexcone HSV, the cone-coordinate embedding,
the squared hue/saturation/value distance, and the 8x40 colour-naming
stimulus grid.

All functions are pure and vectorised over trailing ``(..., 3)`` axes.
Images are float arrays in [0, 1]; hue is expressed in radians [0, 2*pi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


def validate_rgb_image(img: np.ndarray) -> np.ndarray:
    """Check an H x W x 3 float image with channels in [0, 1]; returns it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image channels must lie in [0, 1]")
    return arr


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV with hue in radians.

    Accepts any ``(..., 3)`` array of channels in [0, 1] and returns an
    array of the same shape holding (h, s, v). Achromatic inputs get h = 0.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    v = np.max(arr, axis=-1)
    delta = v - np.min(arr, axis=-1)
    chromatic = delta > 0

    # Where delta == 0 the sector formulas are undefined; guard the divisor.
    safe = np.where(chromatic, delta, 1.0)
    hp = np.where(
        r == v,
        ((g - b) / safe) % 6.0,
        np.where(g == v, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    h = np.where(chromatic, hp * (np.pi / 3.0), 0.0) % TWO_PI

    safe_v = np.where(v > 0, v, 1.0)
    s = np.where(v > 0, delta / safe_v, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse hexcone conversion; hue in radians, any ``(..., 3)`` shape."""
    arr = np.asarray(hsv, dtype=np.float64)
    h, s, v = arr[..., 0] % TWO_PI, arr[..., 1], arr[..., 2]
    c = v * s
    hp = h / (np.pi / 3.0)
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    m = v - c

    sector = np.floor(hp).astype(int) % 6
    z = np.zeros_like(c)
    r1 = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [c, x, z, z, x], c)
    g1 = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [x, c, c, x, z], z)
    b1 = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [z, z, x, c, c], x)
    return np.stack([r1 + m, g1 + m, b1 + m], axis=-1)


def hsv_to_cone(hsv: np.ndarray) -> np.ndarray:
    """Embed (h, s, v) into 3-space as (s*v*cos h, s*v*sin h, v).

    Squared Euclidean distance between two embeddings equals
    :func:`hsv_squared_distance` of the original triples.
    """
    arr = np.asarray(hsv, dtype=np.float64)
    h, s, v = arr[..., 0], arr[..., 1], arr[..., 2]
    sv = s * v
    return np.stack([sv * np.cos(h), sv * np.sin(h), v], axis=-1)


def cone_to_hsv(cone: np.ndarray) -> np.ndarray:
    """Map cone coordinates back to (h, s, v); inverse of :func:`hsv_to_cone`."""
    arr = np.asarray(cone, dtype=np.float64)
    x, y, v = arr[..., 0], arr[..., 1], arr[..., 2]
    sv = np.hypot(x, y)
    h = np.arctan2(y, x) % TWO_PI
    safe_v = np.where(v > 0, v, 1.0)
    s = np.where(v > 0, np.clip(sv / safe_v, 0.0, 1.0), 0.0)
    return np.stack([np.where(sv > 0, h, 0.0), s, v], axis=-1)


def hsv_squared_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared colour distance between HSV triples.

    d^2 = (v2-v1)^2 + s1^2 v1^2 + s2^2 v2^2 - 2 s1 s2 v1 v2 cos(h2-h1),
    i.e. the squared Euclidean distance between the cone embeddings.
    Broadcasts over leading axes; returns a scalar for two single triples.
    """
    pa = np.asarray(a, dtype=np.float64)
    pb = np.asarray(b, dtype=np.float64)
    h1, s1, v1 = pa[..., 0], pa[..., 1], pa[..., 2]
    h2, s2, v2 = pb[..., 0], pb[..., 1], pb[..., 2]
    d2 = (
        (v2 - v1) ** 2
        + (s1 * v1) ** 2
        + (s2 * v2) ** 2
        - 2.0 * s1 * s2 * v1 * v2 * np.cos(h2 - h1)
    )
    # cancellation can leave values a few ulp below zero
    return np.maximum(d2, 0.0)


def circular_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Absolute angular difference on the circle, in [0, pi]."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % TWO_PI
    return np.minimum(d, TWO_PI - d)


@dataclass(frozen=True)
class WCSGrid:
    """The 8 x 40 colour-naming stimulus grid.

    Columns are 40 equally spaced hue bins over [0, 2*pi) with centres at
    (2k+1)*pi/40; rows are 8 equal value bins of [0, 1] with centres at
    (2r+1)/16. Row 0 is the darkest row, row 7 the lightest.
    """

    rows: int = 8
    cols: int = 40
    hue_centres: np.ndarray = field(
        default_factory=lambda: (2.0 * np.arange(40) + 1.0) * np.pi / 40.0
    )
    value_centres: np.ndarray = field(
        default_factory=lambda: (2.0 * np.arange(8) + 1.0) / 16.0
    )

    @property
    def n_chips(self) -> int:
        return self.rows * self.cols

    def chip_hsv(self, row: int, col: int, saturation: float = 1.0) -> np.ndarray:
        """HSV coordinates of a chip centre (chips are shown fully saturated)."""
        return np.array([self.hue_centres[col], saturation, self.value_centres[row]])

    def chip_rgb(self, row: int, col: int, saturation: float = 1.0) -> np.ndarray:
        return hsv_to_rgb(self.chip_hsv(row, col, saturation))


def pixel_to_chip(hsv: np.ndarray, grid: WCSGrid | None = None) -> tuple[int, int]:
    """Map one HSV pixel to the stimulus chip with the nearest (hue, value) centre.

    Hue is compared circularly, value linearly; saturation is ignored.
    Ties break to the lower column index, then the lower row index.
    """
    rows, cols = pixels_to_chips(np.asarray(hsv, dtype=np.float64)[None, :], grid)
    return int(rows[0]), int(cols[0])


def pixels_to_chips(
    hsv: np.ndarray, grid: WCSGrid | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`pixel_to_chip` over an ``(..., 3)`` array.

    Because the grid is a product of independent hue and value bins, the
    nearest chip is the pair of per-axis nearest centres; np.argmin's
    first-minimum rule gives the lower-index tie-break on each axis.
    """
    if grid is None:
        grid = WCSGrid()
    arr = np.asarray(hsv, dtype=np.float64)
    h = arr[..., 0] % TWO_PI
    v = arr[..., 2]
    col = np.argmin(circular_difference(h[..., None], grid.hue_centres), axis=-1)
    row = np.argmin(np.abs(v[..., None] - grid.value_centres), axis=-1)
    return row, col
