"""Downstream recognition: a small default CNN classifier and top-1
evaluation of a classifier behind a quantiser."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .model import _init_conv_linear


class SmallCNN(nn.Module):
    """~200k-parameter CNN for small images; adaptive pooling makes the
    output length num_classes for any input size."""

    def __init__(self, num_classes: int):
        super().__init__()
        if num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        self.num_classes = num_classes
        self.features = nn.Sequential(
            nn.Conv2d(3, 32, 3, padding=1),
            nn.BatchNorm2d(32),
            nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.BatchNorm2d(64),
            nn.ReLU(),
            nn.Conv2d(64, 128, 3, stride=2, padding=1),
            nn.BatchNorm2d(128),
            nn.ReLU(),
            nn.Conv2d(128, 128, 3, padding=1),
            nn.BatchNorm2d(128),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(128, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.pool(self.features(x)).flatten(1)
        return self.fc(z)


def small_cnn_classifier(num_classes: int, seed: int = 0) -> SmallCNN:
    """Build the default classifier with bit-reproducible initial weights."""
    clf = SmallCNN(num_classes)
    gen = torch.Generator().manual_seed(seed)
    _init_conv_linear(clf, gen)
    return clf


@dataclass
class EvalResult:
    top1: float
    per_class: np.ndarray  # accuracy per class (nan where the class is absent)
    class_counts: np.ndarray
    n: int


def evaluate_top1(
    classifier: nn.Module,
    quantiser,
    dataset,
    batch_size: int = 256,
) -> EvalResult:
    """Top-1 accuracy of ``classifier`` on quantised test images.

    ``quantiser`` maps a (B, 3, H, W) batch to its quantised version; pass
    None to classify raw images (the full-colour upper-bound path).
    ``dataset`` provides ``images`` (N, H, W, 3) and ``labels`` (N,).
    """
    if len(dataset.labels) == 0:
        raise ValueError("dataset is empty")
    num_classes = classifier.num_classes if hasattr(classifier, "num_classes") else int(dataset.labels.max()) + 1
    correct = np.zeros(num_classes, dtype=np.int64)
    counts = np.zeros(num_classes, dtype=np.int64)

    was_training = classifier.training
    classifier.eval()
    dtype = next(classifier.parameters()).dtype
    with torch.no_grad():
        for start in range(0, len(dataset.labels), batch_size):
            imgs = dataset.images[start : start + batch_size]
            labels = dataset.labels[start : start + batch_size]
            x = torch.from_numpy(np.ascontiguousarray(imgs)).to(dtype).permute(0, 3, 1, 2)
            if quantiser is not None:
                x = quantiser(x)
            pred = classifier(x).argmax(dim=1).numpy()
            for klass, ok in zip(labels, pred == labels):
                counts[klass] += 1
                correct[klass] += bool(ok)
    if was_training:
        classifier.train()

    with np.errstate(invalid="ignore"):
        per_class = np.where(counts > 0, correct / np.maximum(counts, 1), np.nan)
    return EvalResult(
        top1=float(correct.sum() / counts.sum()),
        per_class=per_class,
        class_counts=counts,
        n=int(counts.sum()),
    )


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
