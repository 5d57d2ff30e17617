"""Classical perception-centred palette quantisers.

Median cut and octree reduction build a palette from the image's own
colour statistics; Floyd-Steinberg error diffusion remaps an image onto
an existing palette while pushing quantisation error onto unvisited
neighbours. All three are deterministic: identical input and colour
count give bit-identical palettes.
"""

from __future__ import annotations

import heapq

import numpy as np

from .colour import validate_rgb_image


def apply_palette(index_map: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Paint an H x W index map with its palette, giving an H x W x 3 image."""
    return np.asarray(palette, dtype=np.float64)[np.asarray(index_map)]


def nearest_palette_index(pixels: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Index of the nearest palette row (Euclidean in RGB, ties to the lowest index)."""
    px = np.asarray(pixels, dtype=np.float64)
    pal = np.asarray(palette, dtype=np.float64)
    d2 = np.sum((px[..., None, :] - pal) ** 2, axis=-1)
    return np.argmin(d2, axis=-1)


# ---------------------------------------------------------------------------
# median cut


def median_cut(img: np.ndarray, n_colours: int) -> tuple[np.ndarray, np.ndarray]:
    """Median-cut palette quantisation.

    Repeatedly splits the box with the largest channel range at the
    (pixel-count weighted) lower median of that channel until ``n_colours``
    boxes exist; the palette holds each box's mean colour. If the image has
    fewer distinct colours than requested, the palette is exactly those
    colours and may be shorter than ``n_colours``.

    Returns ``(palette, index_map)`` with palette shape (K, 3), K <= n_colours.
    """
    if n_colours < 1:
        raise ValueError("n_colours must be >= 1")
    arr = validate_rgb_image(img)
    h, w, _ = arr.shape
    pixels = arr.reshape(-1, 3)
    colours, inverse, counts = np.unique(
        pixels, axis=0, return_inverse=True, return_counts=True
    )

    boxes: list[np.ndarray] = [np.arange(len(colours))]
    while len(boxes) < min(n_colours, len(colours)):
        split = _pick_splittable_box(boxes, colours)
        if split is None:
            break
        box_i, channel = split
        left, right = _split_box(boxes[box_i], colours, counts, channel)
        boxes[box_i] = left
        boxes.append(right)

    palette = np.empty((len(boxes), 3), dtype=np.float64)
    box_of_colour = np.empty(len(colours), dtype=np.int64)
    for k, box in enumerate(boxes):
        if len(box) == 1:  # exact, avoids v*n/n rounding
            palette[k] = colours[box[0]]
        else:
            weights = counts[box].astype(np.float64)
            palette[k] = (colours[box] * weights[:, None]).sum(axis=0) / weights.sum()
        box_of_colour[box] = k
    index_map = box_of_colour[inverse].reshape(h, w)
    return palette, index_map


def _pick_splittable_box(boxes, colours):
    """Box with the widest channel range; box ties to the earliest box,
    channel ties to R, then G, then B."""
    best = None
    for i, box in enumerate(boxes):
        if len(box) < 2:
            continue
        vals = colours[box]
        ranges = vals.max(axis=0) - vals.min(axis=0)
        channel = int(np.argmax(ranges))
        if ranges[channel] <= 0:
            continue
        if best is None or ranges[channel] > best[0]:
            best = (ranges[channel], i, channel)
    if best is None:
        return None
    return best[1], best[2]


def _split_box(box, colours, counts, channel):
    """Split at the weighted lower median of ``channel``; the median pixel
    lands in the left half."""
    vals = colours[box]
    order = np.lexsort((vals[:, 2], vals[:, 1], vals[:, 0], vals[:, channel]))
    sorted_box = box[order]
    cum = np.cumsum(counts[sorted_box])
    target = (cum[-1] - 1) // 2  # 0-based position of the lower median pixel
    median_pos = int(np.searchsorted(cum, target + 1))
    split_at = min(median_pos + 1, len(sorted_box) - 1)
    return sorted_box[:split_at], sorted_box[split_at:]


# ---------------------------------------------------------------------------
# Floyd-Steinberg error diffusion


def floyd_steinberg_dither(img: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Remap an image onto a palette with Floyd-Steinberg error diffusion.

    Scans left-to-right, top-to-bottom; each pixel snaps to the nearest
    palette colour and the residual is spread with weights 7/16 (right),
    3/16 (below-left), 5/16 (below), 1/16 (below-right). Accumulated
    values are clamped to [0, 1] before snapping. Returns the index map.
    """
    pal = np.asarray(palette, dtype=np.float64)
    if pal.ndim != 2 or pal.shape[1] != 3 or len(pal) == 0:
        raise ValueError("palette must be a non-empty K x 3 array")
    work = validate_rgb_image(img).copy()
    h, w, _ = work.shape
    out = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            px = np.clip(work[y, x], 0.0, 1.0)
            idx = int(np.argmin(np.sum((pal - px) ** 2, axis=1)))
            out[y, x] = idx
            err = px - pal[idx]
            if x + 1 < w:
                work[y, x + 1] += err * (7.0 / 16.0)
            if y + 1 < h:
                if x > 0:
                    work[y + 1, x - 1] += err * (3.0 / 16.0)
                work[y + 1, x] += err * (5.0 / 16.0)
                if x + 1 < w:
                    work[y + 1, x + 1] += err * (1.0 / 16.0)
    return out


# ---------------------------------------------------------------------------
# octree


class _OctreeNode:
    __slots__ = ("depth", "serial", "children", "rgb_sum", "count", "parent")

    def __init__(self, depth, serial, parent):
        self.depth = depth
        self.serial = serial
        self.parent = parent
        self.children: list[_OctreeNode | None] = [None] * 8
        self.rgb_sum = np.zeros(3)
        self.count = 0

    @property
    def is_leaf(self):
        return all(c is None for c in self.children)


def _child_slot(q: np.ndarray, depth: int) -> int:
    """Interleaved channel bits: bit (7 - depth) of R, G, B."""
    shift = 7 - depth
    return (
        (((q[0] >> shift) & 1) << 2)
        | (((q[1] >> shift) & 1) << 1)
        | ((q[2] >> shift) & 1)
    )


def octree_quantise(img: np.ndarray, n_colours: int) -> tuple[np.ndarray, np.ndarray]:
    """Octree palette quantisation.

    Pixels are inserted into a depth-8 tree keyed by the bits of their
    8-bit channel values; the deepest, least-populated node whose children
    are all leaves is repeatedly folded into itself until at most
    ``n_colours`` leaves remain. The palette holds per-leaf mean colours
    (of the original float values) in depth-first traversal order.

    Returns ``(palette, index_map)``.
    """
    if n_colours < 1:
        raise ValueError("n_colours must be >= 1")
    arr = validate_rgb_image(img)
    h, w, _ = arr.shape
    pixels = arr.reshape(-1, 3)
    colours, inverse, counts = np.unique(
        pixels, axis=0, return_inverse=True, return_counts=True
    )
    quantised = np.clip(np.round(colours * 255.0), 0, 255).astype(np.int64)

    serial = 0
    root = _OctreeNode(0, serial, None)
    n_leaves = 0
    leaf_of_colour = {}
    for ci in range(len(colours)):
        node = root
        for depth in range(8):
            slot = _child_slot(quantised[ci], depth)
            if node.children[slot] is None:
                serial += 1
                node.children[slot] = _OctreeNode(depth + 1, serial, node)
                if depth == 7:
                    n_leaves += 1
            node = node.children[slot]
        node.rgb_sum += colours[ci] * counts[ci]
        node.count += int(counts[ci])
        leaf_of_colour[ci] = node

    # aggregate counts upward so "least populated" compares whole subtrees
    def accumulate(node):
        for c in node.children:
            if c is not None:
                accumulate(c)
                node.rgb_sum += c.rgb_sum
                node.count += c.count

    accumulate(root)

    # fold reducible nodes: deepest first, then fewest pixels, then insertion order
    heap: list[tuple[int, int, int]] = []
    by_serial = {}

    def collect(node):
        by_serial[node.serial] = node
        if not node.is_leaf:
            if all(c is None or c.is_leaf for c in node.children):
                heapq.heappush(heap, (-node.depth, node.count, node.serial))
            for c in node.children:
                if c is not None:
                    collect(c)

    collect(root)
    while n_leaves > n_colours and heap:
        _, _, s = heapq.heappop(heap)
        node = by_serial[s]
        if node.is_leaf or not all(c is None or c.is_leaf for c in node.children):
            continue  # stale entry
        folded = sum(1 for c in node.children if c is not None)
        node.children = [None] * 8
        n_leaves -= folded - 1
        parent = node.parent
        if parent is not None and all(c is None or c.is_leaf for c in parent.children):
            heapq.heappush(heap, (-parent.depth, parent.count, parent.serial))

    # palette in depth-first order; walk each distinct colour to its leaf
    palette_rows = []
    leaf_index = {}

    def gather(node):
        if node.is_leaf:
            leaf_index[id(node)] = len(palette_rows)
            palette_rows.append(node.rgb_sum / node.count)
            return
        for c in node.children:
            if c is not None:
                gather(c)

    gather(root)
    palette = np.array(palette_rows)

    colour_to_palette = np.empty(len(colours), dtype=np.int64)
    for ci in range(len(colours)):
        node = root
        for depth in range(8):
            nxt = node.children[_child_slot(quantised[ci], depth)]
            if nxt is None:
                break
            node = nxt
        colour_to_palette[ci] = leaf_index[id(node)]

    # leaves holding a single distinct colour reproduce it exactly
    for k in range(len(palette)):
        members = np.flatnonzero(colour_to_palette == k)
        if len(members) == 1:
            palette[k] = colours[members[0]]

    index_map = colour_to_palette[inverse].reshape(h, w)
    return palette, index_map
