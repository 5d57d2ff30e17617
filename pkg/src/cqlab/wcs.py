"""Colour-naming probability maps over the 8 x 40 stimulus grid.

A human map carries a per-chip distribution over C named colour terms
(loaded from CSV). A machine map is built by streaming quantised images:
every pixel votes for its colour index at its nearest chip, and each chip
keeps the modal index. The shipped Nafaanra-1978 fixture is a smoothed
three-term (light / dark / warm) partition of the grid; it approximates
the published survey data, it is not survey ground truth.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .colour import WCSGrid, pixels_to_chips, rgb_to_hsv, validate_rgb_image

UNOBSERVED = -1

NAFAANRA_TERMS = ("fiNge", "wOO", "nyiE")  # light, dark, warm/red-like


class HumanMapError(ValueError):
    """Raised when a human colour-naming CSV fails validation."""


@dataclass
class HumanWCSMap:
    """8 x 40 x C per-chip probabilities over C colour terms."""

    probs: np.ndarray
    terms: tuple[str, ...]

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def argmax_indices(self) -> np.ndarray:
        """Modal term per chip (ties to the lower term index)."""
        return np.argmax(self.probs, axis=-1)

    def validate(self) -> None:
        if self.probs.shape != (8, 40, self.n_terms):
            raise HumanMapError(f"expected shape (8, 40, {self.n_terms}), got {self.probs.shape}")
        if (self.probs < 0).any():
            raise HumanMapError("negative probabilities")
        sums = self.probs.sum(axis=-1)
        if np.abs(sums - 1.0).max() > 1e-6:
            raise HumanMapError("per-chip probabilities must sum to 1")


@dataclass
class MachineWCSMap:
    """Modal colour index per chip, with pixel mass and per-cluster display colours."""

    index: np.ndarray  # 8 x 40 int, UNOBSERVED where no pixel landed
    mass: np.ndarray  # 8 x 40 pixel counts
    display_colour: np.ndarray  # C x 3 mean RGB of each cluster's member pixels
    n_colours: int

    def observed(self) -> np.ndarray:
        return self.index != UNOBSERVED

    def chip_sets(self) -> list[set[tuple[int, int]]]:
        """Observed chips grouped by colour index."""
        sets: list[set[tuple[int, int]]] = [set() for _ in range(self.n_colours)]
        for r, c in zip(*np.nonzero(self.observed())):
            sets[self.index[r, c]].add((int(r), int(c)))
        return sets


def build_machine_wcs_map(
    images,
    quantiser,
    n_colours: int,
    grid: WCSGrid | None = None,
) -> MachineWCSMap:
    """Accumulate a machine colour-naming map over an image stream.

    ``quantiser`` maps an H x W x 3 image to an H x W integer index map.
    Every pixel lands on its nearest (hue, value) chip; each chip keeps
    the most frequent index (ties to the lower index). Display colours
    are the mean original RGB of each cluster's pixels.
    """
    if grid is None:
        grid = WCSGrid()
    counts = np.zeros((grid.rows, grid.cols, n_colours), dtype=np.int64)
    colour_sum = np.zeros((n_colours, 3), dtype=np.float64)
    colour_n = np.zeros(n_colours, dtype=np.int64)

    for img in images:
        arr = validate_rgb_image(img)
        idx = np.asarray(quantiser(arr))
        if idx.shape != arr.shape[:2]:
            raise ValueError("quantiser must return an H x W index map")
        if idx.min() < 0 or idx.max() >= n_colours:
            raise ValueError("quantiser produced an index outside [0, n_colours)")
        rows, cols = pixels_to_chips(rgb_to_hsv(arr), grid)
        np.add.at(counts, (rows.ravel(), cols.ravel(), idx.ravel()), 1)
        flat = arr.reshape(-1, 3)
        np.add.at(colour_sum, idx.ravel(), flat)
        np.add.at(colour_n, idx.ravel(), 1)

    mass = counts.sum(axis=-1)
    index = np.where(mass > 0, np.argmax(counts, axis=-1), UNOBSERVED)
    display = np.full((n_colours, 3), 0.5)
    used = colour_n > 0
    display[used] = colour_sum[used] / colour_n[used, None]
    return MachineWCSMap(index=index, mass=mass, display_colour=display, n_colours=n_colours)


def project_human_map(
    img: np.ndarray, hmap: HumanWCSMap, grid: WCSGrid | None = None
) -> np.ndarray:
    """Per-pixel copy of the chip distribution under the pixel's (hue, value).

    Returns an H x W x C array whose rows are exact copies of chip rows.
    """
    arr = validate_rgb_image(img)
    rows, cols = pixels_to_chips(rgb_to_hsv(arr), grid)
    return hmap.probs[rows, cols]


def map_agreement(machine: MachineWCSMap, human: HumanWCSMap) -> float:
    """Fraction of observed chips whose machine index matches the human mode."""
    if machine.n_colours != human.n_terms:
        raise ValueError(
            f"colour counts differ: machine {machine.n_colours}, human {human.n_terms}"
        )
    observed = machine.observed()
    if not observed.any():
        warnings.warn("machine map has no observed chips; agreement defined as 0.0")
        return 0.0
    human_mode = human.argmax_indices()
    return float(np.mean(machine.index[observed] == human_mode[observed]))


# ---------------------------------------------------------------------------
# CSV interchange

HUMAN_HEADER = ["row", "col", "term", "probability"]
MACHINE_HEADER = ["row", "col", "index", "mass", "display_r", "display_g", "display_b"]


def load_human_map(path) -> HumanWCSMap:
    """Load a human colour-naming map from CSV (row, col, term, probability).

    Terms are ordered by first appearance. Chips with no entries are filled
    uniformly; per-chip sums may differ from 1 by at most 1e-3 and are then
    renormalised exactly. Malformed rows raise HumanMapError with the
    offending line number.
    """
    terms: list[str] = []
    term_idx: dict[str, int] = {}
    entries: dict[tuple[int, int, int], float] = {}
    first_line_of_chip: dict[tuple[int, int], int] = {}

    with open(path, newline="") as f:
        reader = csv.reader(f)
        for lineno, fields in enumerate(reader, start=1):
            if lineno == 1:
                if [s.strip() for s in fields] != HUMAN_HEADER:
                    raise HumanMapError(
                        f"line 1: expected header {','.join(HUMAN_HEADER)}"
                    )
                continue
            if not fields or all(not s.strip() for s in fields):
                continue
            if len(fields) != 4:
                raise HumanMapError(f"line {lineno}: expected 4 fields, got {len(fields)}")
            try:
                row, col = int(fields[0]), int(fields[1])
                prob = float(fields[3])
            except ValueError as exc:
                raise HumanMapError(f"line {lineno}: {exc}") from exc
            term = fields[2].strip()
            if not (0 <= row < 8 and 0 <= col < 40):
                raise HumanMapError(f"line {lineno}: chip ({row}, {col}) outside the 8x40 grid")
            if not (0.0 <= prob <= 1.0):
                raise HumanMapError(f"line {lineno}: probability {prob} outside [0, 1]")
            if not term:
                raise HumanMapError(f"line {lineno}: empty term name")
            if term not in term_idx:
                term_idx[term] = len(terms)
                terms.append(term)
            key = (row, col, term_idx[term])
            if key in entries:
                raise HumanMapError(f"line {lineno}: duplicate entry for chip ({row}, {col}) term {term}")
            entries[key] = prob
            first_line_of_chip.setdefault((row, col), lineno)

    if not terms:
        raise HumanMapError("no colour terms found")

    probs = np.zeros((8, 40, len(terms)), dtype=np.float64)
    for (row, col, t), p in entries.items():
        probs[row, col, t] = p
    for row in range(8):
        for col in range(40):
            total = probs[row, col].sum()
            if (row, col) not in first_line_of_chip:
                probs[row, col] = 1.0 / len(terms)
                continue
            if abs(total - 1.0) > 1e-3:
                raise HumanMapError(
                    f"line {first_line_of_chip[(row, col)]}: chip ({row}, {col}) "
                    f"probabilities sum to {total:.6f}, not 1"
                )
            probs[row, col] /= total

    hmap = HumanWCSMap(probs=probs, terms=tuple(terms))
    hmap.validate()
    return hmap


def save_human_map(path, hmap: HumanWCSMap) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HUMAN_HEADER)
        for row in range(8):
            for col in range(40):
                for t, term in enumerate(hmap.terms):
                    writer.writerow([row, col, term, f"{hmap.probs[row, col, t]:.10g}"])


def save_machine_map(path, mmap: MachineWCSMap) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MACHINE_HEADER)
        for row in range(8):
            for col in range(40):
                idx = int(mmap.index[row, col])
                if idx == UNOBSERVED:
                    writer.writerow([row, col, "unobserved", 0, "", "", ""])
                else:
                    r, g, b = mmap.display_colour[idx]
                    writer.writerow(
                        [row, col, idx, int(mmap.mass[row, col]),
                         f"{r:.6f}", f"{g:.6f}", f"{b:.6f}"]
                    )


# ---------------------------------------------------------------------------
# Nafaanra-1978 fixture (approximation)


def warm_columns(grid: WCSGrid | None = None) -> np.ndarray:
    """Columns whose hue centres fall in the warm (red through yellow) arc."""
    if grid is None:
        grid = WCSGrid()
    h = grid.hue_centres
    return np.flatnonzero((h < 1.1) | (h > 5.9))


def nafaanra_1978_mode_grid(grid: WCSGrid | None = None) -> np.ndarray:
    """8 x 40 modal term indices of the three-term partition.

    Light ('fiNge') claims the two lightest rows, dark ('wOO') the two
    darkest rows plus the cool mid-value chips, and warm/red-like ('nyiE')
    the warm mid-value chips. Mid-value greens sit inside the dark region.
    """
    if grid is None:
        grid = WCSGrid()
    mode = np.full((grid.rows, grid.cols), 1, dtype=np.int64)  # wOO default
    mode[6:, :] = 0  # fiNge
    warm = warm_columns(grid)
    for row in range(2, 6):
        mode[row, warm] = 2  # nyiE
    return mode


def nafaanra_1978_approximation(grid: WCSGrid | None = None) -> HumanWCSMap:
    """Smoothed-mode approximation of the 1978 Nafaanra three-term system.

    Core chips (all four neighbours share their mode) get an 0.87-dominant
    profile; chips on a region boundary get a softer 0.55 / 0.35 / 0.10
    split towards the most common neighbouring mode. Hue neighbours wrap
    circularly.
    """
    if grid is None:
        grid = WCSGrid()
    mode = nafaanra_1978_mode_grid(grid)
    probs = np.zeros((grid.rows, grid.cols, 3))
    for row in range(grid.rows):
        for col in range(grid.cols):
            own = mode[row, col]
            neighbours = [mode[row, (col - 1) % grid.cols], mode[row, (col + 1) % grid.cols]]
            if row > 0:
                neighbours.append(mode[row - 1, col])
            if row < grid.rows - 1:
                neighbours.append(mode[row + 1, col])
            differing = [m for m in neighbours if m != own]
            if not differing:
                p = np.zeros(3)
                p[own] = 0.87
                minors = [t for t in range(3) if t != own]
                # warm leans get 0.09 where present, mirroring the published
                # light/dark/warm split of a core warm chip
                big = 2 if own != 2 else 0
                small = [t for t in minors if t != big][0]
                p[big], p[small] = 0.09, 0.04
            else:
                counts = np.bincount(differing, minlength=3)
                counts[own] = 0
                other = int(np.argmax(counts))
                third = [t for t in range(3) if t not in (own, other)][0]
                p = np.zeros(3)
                p[own], p[other], p[third] = 0.55, 0.35, 0.10
            probs[row, col] = p
    return HumanWCSMap(probs=probs, terms=NAFAANRA_TERMS)


def one_hot_nafaanra_map(grid: WCSGrid | None = None) -> HumanWCSMap:
    """One-hot variant of the three-term partition (no boundary smoothing)."""
    mode = nafaanra_1978_mode_grid(grid)
    probs = np.zeros((8, 40, 3))
    for row in range(8):
        for col in range(40):
            probs[row, col, mode[row, col]] = 1.0
    return HumanWCSMap(probs=probs, terms=NAFAANRA_TERMS)


def human_term_centres(hmap: HumanWCSMap, grid: WCSGrid | None = None) -> np.ndarray:
    """Representative (hue, value) centre per term.

    Hue is the probability-weighted circular mean of chip hue centres,
    value the weighted linear mean; returns a (C, 2) array.
    """
    if grid is None:
        grid = WCSGrid()
    hue = np.broadcast_to(grid.hue_centres[None, :], (8, 40))
    val = np.broadcast_to(grid.value_centres[:, None], (8, 40))
    centres = np.empty((hmap.n_terms, 2))
    for t in range(hmap.n_terms):
        w = hmap.probs[..., t]
        total = w.sum()
        if total == 0:
            centres[t] = (0.0, 0.5)
            continue
        centres[t, 0] = np.arctan2(
            (w * np.sin(hue)).sum(), (w * np.cos(hue)).sum()
        ) % (2.0 * np.pi)
        centres[t, 1] = (w * val).sum() / total
    return centres


def load_nafaanra_1978() -> HumanWCSMap:
    """Load the packaged Nafaanra-1978 fixture CSV."""
    ref = resources.files("cqlab").joinpath("data/nafaanra_1978.csv")
    with resources.as_file(ref) as path:
        return load_human_map(path)
