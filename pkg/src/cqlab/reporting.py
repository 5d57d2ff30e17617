"""Rendered artefacts: stimulus-grid map images, complexity-accuracy
curves, and the delimited metrics files they sit alongside."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .colour import WCSGrid, hsv_to_rgb
from .wcs import UNOBSERVED, HumanWCSMap, MachineWCSMap

UNOBSERVED_GREY = (0.88, 0.88, 0.88)


def write_metrics_csv(path, rows: list[dict], fields: tuple[str, ...]) -> None:
    """Write metric rows with stable float formatting (%.10g)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(fields)
        for row in rows:
            writer.writerow(
                [
                    row[k] if isinstance(row[k], (int, str)) else f"{row[k]:.10g}"
                    for k in fields
                ]
            )


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        rows = []
        for raw in reader:
            row = {}
            for key, value in raw.items():
                try:
                    row[key] = int(value)
                except (TypeError, ValueError):
                    try:
                        row[key] = float(value)
                    except (TypeError, ValueError):
                        row[key] = value
            rows.append(row)
        return rows


def _paint_grid(chip_colours: np.ndarray, path, title: str | None) -> None:
    """chip_colours: (8, 40, 3) RGB. Row 7 (lightest) is drawn on top."""
    fig, ax = plt.subplots(figsize=(10, 2.4))
    ax.imshow(chip_colours, origin="lower", interpolation="nearest", aspect="equal")
    ax.set_xticks(np.arange(0, 40, 5))
    ax.set_yticks(np.arange(0, 8, 2))
    ax.set_xlabel("hue bin")
    ax.set_ylabel("value bin")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_machine_map(mmap: MachineWCSMap, path, title: str | None = None) -> None:
    """Paint every observed chip with its cluster's display colour."""
    colours = np.empty((8, 40, 3))
    colours[:] = UNOBSERVED_GREY
    for r in range(8):
        for c in range(40):
            idx = mmap.index[r, c]
            if idx != UNOBSERVED:
                colours[r, c] = np.clip(mmap.display_colour[idx], 0, 1)
    _paint_grid(colours, path, title)


def render_human_map(
    hmap: HumanWCSMap, path, title: str | None = None, grid: WCSGrid | None = None
) -> None:
    """Paint every chip with its own fully saturated colour, dimmed towards
    grey by how uncertain the chip's naming is (1 - max probability)."""
    if grid is None:
        grid = WCSGrid()
    certainty = hmap.probs.max(axis=-1)
    colours = np.empty((8, 40, 3))
    for r in range(8):
        for c in range(40):
            own = hsv_to_rgb(grid.chip_hsv(r, c))
            colours[r, c] = certainty[r, c] * own + (1 - certainty[r, c]) * 0.5
    _paint_grid(np.clip(colours, 0, 1), path, title)


def render_accuracy_curve(rows: list[dict], path, title: str | None = None) -> None:
    """Plot top-1 accuracy against palette bits, one line per method."""
    methods = sorted({row["method"] for row in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in methods:
        pts = sorted(
            ((row["bits"], row["top1"]) for row in rows if row["method"] == method)
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_xlabel("palette bits")
    ax.set_ylabel("top-1 accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_palette_csv(path, palette: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "r", "g", "b"])
        for i, (r, g, b) in enumerate(np.asarray(palette, dtype=np.float64)):
            writer.writerow([i, f"{r:.10g}", f"{g:.10g}", f"{b:.10g}"])
