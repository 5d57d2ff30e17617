"""Dataset ingestion, batching, augmentation, and synthetic datasets.

Two on-disk formats are supported:

* ``cifar``  - binary batches of 3073-byte records (1 label byte followed
  by 32x32 R, G, B planes), either a single ``.bin`` file or a directory
  of them.
* ``imagedir`` - a directory with a ``labels.csv`` manifest
  (``filename,label``) next to the image files.

Synthetic generators build the colour-separable classification set and
the chip-aligned sets used by the colour-naming embedding and evolution
protocols.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from ..colour import WCSGrid, hsv_to_rgb

CIFAR_RECORD = 3073
CIFAR_SIDE = 32


@dataclass
class LabelledDataset:
    images: np.ndarray  # (N, H, W, 3) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    class_names: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.class_names:
            n = int(self.labels.max()) + 1 if len(self.labels) else 0
            self.class_names = tuple(str(i) for i in range(n))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, indices) -> "LabelledDataset":
        idx = np.asarray(indices)
        return LabelledDataset(self.images[idx], self.labels[idx], self.class_names)


def ingest_dataset(path, fmt: str, class_names: tuple[str, ...] = ()) -> LabelledDataset:
    """Load a labelled image dataset from disk."""
    if fmt == "cifar":
        return _ingest_cifar(path, class_names)
    if fmt == "imagedir":
        return _ingest_imagedir(path, class_names)
    raise ValueError(f"unknown dataset format {fmt!r} (expected 'cifar' or 'imagedir')")


def _ingest_cifar(path, class_names) -> LabelledDataset:
    if os.path.isdir(path):
        files = sorted(
            os.path.join(path, f) for f in os.listdir(path) if f.endswith(".bin")
        )
        if not files:
            raise ValueError(f"no .bin batch files under {path}")
    else:
        files = [path]
    images, labels = [], []
    for fname in files:
        raw = np.fromfile(fname, dtype=np.uint8)
        if len(raw) % CIFAR_RECORD != 0:
            offset = len(raw) - (len(raw) % CIFAR_RECORD)
            raise ValueError(
                f"{fname}: truncated record at byte offset {offset} "
                f"(file size {len(raw)} is not a multiple of {CIFAR_RECORD})"
            )
        records = raw.reshape(-1, CIFAR_RECORD)
        labels.append(records[:, 0].astype(np.int64))
        planes = records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
        images.append(planes.transpose(0, 2, 3, 1).astype(np.float32) / 255.0)
    return LabelledDataset(np.concatenate(images), np.concatenate(labels), class_names)


def write_cifar_batch(dataset: LabelledDataset, path) -> None:
    """Serialise a 32x32 dataset into the binary batch format."""
    if dataset.images.shape[1:3] != (CIFAR_SIDE, CIFAR_SIDE):
        raise ValueError("cifar batches hold 32x32 images")
    n = len(dataset)
    records = np.empty((n, CIFAR_RECORD), dtype=np.uint8)
    records[:, 0] = dataset.labels.astype(np.uint8)
    planes = np.clip(np.round(dataset.images * 255.0), 0, 255).astype(np.uint8)
    records[:, 1:] = planes.transpose(0, 3, 1, 2).reshape(n, -1)
    records.tofile(path)


def _ingest_imagedir(path, class_names) -> LabelledDataset:
    from PIL import Image

    manifest = os.path.join(path, "labels.csv")
    if not os.path.exists(manifest):
        raise ValueError(f"missing label manifest {manifest}")
    images, labels = [], []
    with open(manifest, newline="") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row and row[0].strip().lower() == "filename":
                continue
            if not row or all(not s.strip() for s in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{manifest}:{lineno}: expected 'filename,label'")
            fname, raw_label = row[0].strip(), row[1].strip()
            try:
                label = int(raw_label)
            except ValueError:
                raise ValueError(f"{manifest}:{lineno}: unknown label {raw_label!r}") from None
            if label < 0:
                raise ValueError(f"{manifest}:{lineno}: unknown label {raw_label!r}")
            with Image.open(os.path.join(path, fname)) as im:
                images.append(np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0)
            labels.append(label)
    if not labels:
        raise ValueError(f"{manifest}: no entries")
    return LabelledDataset(np.stack(images), np.array(labels, dtype=np.int64), class_names)


# ---------------------------------------------------------------------------
# batching and augmentation


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """Stateless per-epoch generator; resuming at epoch k reproduces the
    original batch order and augmentation draws exactly."""
    return np.random.default_rng([seed, epoch])


def augment_batch(imgs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random 4-pixel reflect-pad crop followed by random horizontal flip."""
    n, h, w, _ = imgs.shape
    padded = np.pad(imgs, ((0, 0), (4, 4), (4, 4), (0, 0)), mode="reflect")
    out = np.empty_like(imgs)
    offsets = rng.integers(0, 9, size=(n, 2))
    flips = rng.random(n) < 0.5
    for i in range(n):
        dy, dx = offsets[i]
        crop = padded[i, dy : dy + h, dx : dx + w]
        out[i] = crop[:, ::-1] if flips[i] else crop
    return out


def iter_batches(
    dataset: LabelledDataset,
    batch_size: int,
    rng: np.random.Generator | None = None,
    augment: bool = False,
    shuffle: bool = True,
):
    """Yield (indices, images, labels) batches as torch tensors.

    Order is deterministic given the generator; without one the dataset
    order is used as-is.
    """
    order = np.arange(len(dataset))
    if shuffle:
        if rng is None:
            raise ValueError("shuffling requires a generator")
        rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        imgs = dataset.images[idx]
        if augment:
            imgs = augment_batch(imgs, rng)
        x = torch.from_numpy(np.ascontiguousarray(imgs)).permute(0, 3, 1, 2)
        y = torch.from_numpy(dataset.labels[idx])
        yield idx, x, y


# ---------------------------------------------------------------------------
# synthetic datasets

BASE_COLOURS = np.array(
    [
        [0.85, 0.12, 0.12],  # red
        [0.10, 0.75, 0.15],  # green
        [0.15, 0.20, 0.85],  # blue
        [0.85, 0.78, 0.10],  # yellow
    ]
)
COLOUR_NAMES = ("red", "green", "blue", "yellow")


def make_colour_separable_dataset(
    n: int, size: int = 32, seed: int = 0, noise: float = 0.03
) -> LabelledDataset:
    """Four-class colour-separable classification set.

    Each image is a grey field with one dominant patch in the class colour
    and two smaller distractor patches in other base colours, under a
    per-image brightness factor and pixel noise. The class is the dominant
    colour, so recognition survives exactly as much quantisation as keeps
    the four base colours apart.
    """
    rng = np.random.default_rng(seed)
    images = np.empty((n, size, size, 3), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    third = size // 3
    for i in range(n):
        label = i % 4
        brightness = rng.uniform(0.7, 1.0)
        img = np.full((size, size, 3), 0.5)
        others = rng.permutation([c for c in range(4) if c != label])[:2]
        for colour in others:
            py, px = rng.integers(0, size - third, size=2)
            img[py : py + third, px : px + third] = BASE_COLOURS[colour]
        dy, dx = rng.integers(0, max(size // 4, 1), size=2)
        side = size - size // 4
        img[dy : dy + side, dx : dx + side] = BASE_COLOURS[label]
        img = img * brightness + rng.normal(0.0, noise, img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
        labels[i] = label
    return LabelledDataset(images, labels, COLOUR_NAMES)


# chip-aligned clusters for the colour-naming protocols

LIGHT_ROWS = (6, 7)
DARK_ROWS = (0, 1)
MID_ROWS = (2, 3, 4, 5)
YELLOWGREEN_COLS = (10, 11, 12, 13, 14)


def _cluster_chips(grid: WCSGrid):
    from ..wcs import warm_columns

    warm = warm_columns(grid)
    light = [(r, c) for r in LIGHT_ROWS for c in range(grid.cols)]
    dark = [(r, c) for r in DARK_ROWS for c in range(grid.cols)]
    warm_chips = [(r, c) for r in MID_ROWS for c in warm]
    yellowgreen = [(r, c) for r in MID_ROWS for c in YELLOWGREEN_COLS]
    return light, dark, warm_chips, yellowgreen


def _chip_pixels(chips, count, grid, rng):
    picks = rng.integers(0, len(chips), size=count)
    hsv = np.array([grid.chip_hsv(*chips[p]) for p in picks])
    return hsv_to_rgb(hsv)


def make_chip_cluster_dataset(
    n: int, size: int = 16, seed: int = 0, grid: WCSGrid | None = None
) -> LabelledDataset:
    """Three-class set whose pixels sit exactly at chip centres.

    Class 0 draws from the light rows, class 1 from the dark rows, class 2
    from the warm mid-value chips, matching the one-hot three-term map.
    """
    if grid is None:
        grid = WCSGrid()
    light, dark, warm_chips, _ = _cluster_chips(grid)
    clusters = [light, dark, warm_chips]
    rng = np.random.default_rng(seed)
    images = np.empty((n, size, size, 3), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        label = i % 3
        pixels = _chip_pixels(clusters[label], size * size, grid, rng)
        images[i] = pixels.reshape(size, size, 3)
        labels[i] = label
    return LabelledDataset(images, labels, ("light", "dark", "warm"))


EVOLUTION_PAIRS = ((1, 0), (3, 0), (1, 2), (3, 2))  # (left cluster, right cluster)
EVOLUTION_CLASS_NAMES = ("dark+light", "yg+light", "dark+warm", "yg+warm")


def make_evolution_dataset(
    n: int, size: int = 16, seed: int = 0, grid: WCSGrid | None = None
) -> LabelledDataset:
    """Four-class set with a latent yellow-green cluster inside the dark region.

    Each image is two vertical bands drawn from two chip clusters
    (0 light, 1 dark, 2 warm, 3 yellow-green mid-value). Classes pair dark
    or yellow-green with light or warm, so telling yellow-green and dark
    apart is required for the labels.
    """
    if grid is None:
        grid = WCSGrid()
    clusters = _cluster_chips(grid)
    rng = np.random.default_rng(seed)
    images = np.empty((n, size, size, 3), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    half = size // 2
    for i in range(n):
        label = i % 4
        left, right = EVOLUTION_PAIRS[label]
        img = np.empty((size, size, 3))
        img[:, :half] = _chip_pixels(clusters[left], size * half, grid, rng).reshape(size, half, 3)
        img[:, half:] = _chip_pixels(clusters[right], size * (size - half), grid, rng).reshape(
            size, size - half, 3
        )
        images[i] = img
        labels[i] = label
    return LabelledDataset(images, labels, EVOLUTION_CLASS_NAMES)
