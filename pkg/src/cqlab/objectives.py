"""Training objectives: task loss, the three perceptual-structure terms,
their weighted composition, and the two colour-naming embedding losses.

Everything operates on batch tensors (B, C, H, W) / (B, 3, H, W) and is
differentiable; cluster membership is always a detached hard assignment,
so gradients of the intra-cluster term flow through pixel values only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .model import torch_hsv_to_cone


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights for the colour, diversity and perceptual terms."""

    alpha: float = 1.0
    beta: float = 0.3
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    """Scalar values of every term for one forward pass.

    total always equals machine + alpha*colour + beta*diversity +
    gamma*perceptual, recomputed in float64 from the reported terms.
    """

    machine: float
    colour: float
    diversity: float
    perceptual: float
    total: float


def machine_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy between predicted class scores and integer labels."""
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    labels = torch.atleast_1d(labels)
    if labels.min() < 0 or labels.max() >= logits.shape[-1]:
        raise ValueError("label outside the class range")
    return F.cross_entropy(logits, labels)


def diversity_reg(m: torch.Tensor) -> torch.Tensor:
    """Implicit assignment entropy: log2(C) * (1 - mean of per-channel
    spatial maxima). Zero when every colour is used confidently somewhere.
    """
    if m.dim() == 3:
        m = m.unsqueeze(0)
    c = m.shape[1]
    if c < 2:
        raise ValueError("diversity requires at least 2 colours")
    channel_max = m.flatten(2).max(dim=-1).values  # (B, C)
    return math.log2(c) * (1.0 - channel_max.mean(dim=1)).mean()


def perceptual_loss(x_quant: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Mean squared error over every pixel and channel."""
    if x_quant.shape != x.shape:
        raise ValueError(f"shape mismatch: {tuple(x_quant.shape)} vs {tuple(x.shape)}")
    return F.mse_loss(x_quant, x)


def _cluster_mean_distances(
    cone: torch.Tensor, assignment: torch.Tensor, n_colours: int, targets: torch.Tensor
) -> torch.Tensor:
    """Per-image mean over clusters of mean squared distance to ``targets``
    (one 3-vector per batch-cluster cell); empty clusters contribute 0."""
    b = cone.shape[0]
    flat = cone.permute(0, 2, 3, 1).reshape(-1, 3)
    group = (
        assignment.reshape(b, -1)
        + n_colours * torch.arange(b, device=cone.device).unsqueeze(1)
    ).reshape(-1)
    counts = torch.zeros(b * n_colours, dtype=cone.dtype, device=cone.device).index_add_(
        0, group, torch.ones_like(flat[:, 0])
    )
    d2 = ((flat - targets[group]) ** 2).sum(dim=-1)
    per_cluster = torch.zeros_like(counts).index_add_(0, group, d2) / counts.clamp(min=1.0)
    return per_cluster.view(b, n_colours).sum(dim=1) / n_colours


def intra_cluster_colour_reg(
    hsv: torch.Tensor, assignment: torch.Tensor, n_colours: int
) -> torch.Tensor:
    """Mean within-cluster colour variance in hue/saturation/value space.

    ``hsv`` is a (B, 3, H, W) tensor; ``assignment`` a (B, H, W) integer
    map (detached). Each cluster's centroid is the cone-coordinate mean of
    its pixels, so the term is the mean over clusters of the mean squared
    hue/saturation/value distance to the centroid; empty clusters add 0.
    """
    if hsv.dim() == 3:
        hsv = hsv.unsqueeze(0)
    if assignment.dim() == 2:
        assignment = assignment.unsqueeze(0)
    assignment = assignment.detach().long()
    b = hsv.shape[0]
    cone = torch_hsv_to_cone(hsv)
    flat = cone.permute(0, 2, 3, 1).reshape(-1, 3)
    group = (
        assignment.reshape(b, -1)
        + n_colours * torch.arange(b, device=hsv.device).unsqueeze(1)
    ).reshape(-1)
    counts = torch.zeros(b * n_colours, dtype=cone.dtype, device=cone.device).index_add_(
        0, group, torch.ones_like(flat[:, 0])
    )
    sums = torch.zeros(b * n_colours, 3, dtype=cone.dtype, device=cone.device).index_add_(
        0, group, flat
    )
    centroids = sums / counts.clamp(min=1.0).unsqueeze(1)
    return _cluster_mean_distances(cone, assignment, n_colours, centroids).mean()


def central_colour_reg(
    hsv: torch.Tensor, assignment: torch.Tensor, centres_hv: torch.Tensor
) -> torch.Tensor:
    """Intra-cluster term against fixed (hue, value) centres with saturation
    forced to 1 on both sides, averaged over the batch."""
    if hsv.dim() == 3:
        hsv = hsv.unsqueeze(0)
    if assignment.dim() == 2:
        assignment = assignment.unsqueeze(0)
    assignment = assignment.detach().long()
    b = hsv.shape[0]
    n_colours = centres_hv.shape[0]

    h, v = hsv[:, 0], hsv[:, 2]
    pixel_embed = torch.stack([v * torch.cos(h), v * torch.sin(h), v], dim=1)
    ch, cv = centres_hv[:, 0].to(hsv.dtype), centres_hv[:, 1].to(hsv.dtype)
    centre_embed = torch.stack([cv * torch.cos(ch), cv * torch.sin(ch), cv], dim=1)
    targets = centre_embed.repeat(b, 1)
    return _cluster_mean_distances(pixel_embed, assignment, n_colours, targets).mean()


def total_loss(
    l_machine: torch.Tensor,
    r_colour: torch.Tensor | float,
    r_diversity: torch.Tensor | float,
    l_perceptual: torch.Tensor | float,
    weights: LossWeights = LossWeights(),
) -> tuple[torch.Tensor, LossReport]:
    """Weighted composition of all terms.

    Returns the differentiable total plus a float report whose ``total``
    is the exact float64 weighted sum of the reported term values.
    """
    total = (
        l_machine
        + weights.alpha * _as_tensor(r_colour, l_machine)
        + weights.beta * _as_tensor(r_diversity, l_machine)
        + weights.gamma * _as_tensor(l_perceptual, l_machine)
    )
    lm, rc = _as_float(l_machine), _as_float(r_colour)
    rd, lp = _as_float(r_diversity), _as_float(l_perceptual)
    report = LossReport(
        machine=lm,
        colour=rc,
        diversity=rd,
        perceptual=lp,
        total=lm + weights.alpha * rc + weights.beta * rd + weights.gamma * lp,
    )
    return total, report


def _as_tensor(value, like: torch.Tensor) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(value, dtype=like.dtype, device=like.device)


def _as_float(value) -> float:
    return float(value.detach() if isinstance(value, torch.Tensor) else value)


def pixelwise_cross_entropy(m: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over pixels of -sum_c target_c * log(m_c)."""
    if m.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(m.shape)} vs {tuple(target.shape)}")
    return -(target * torch.log(m.clamp(min=1e-12))).sum(dim=1).mean()


def full_embedding_loss(
    m: torch.Tensor,
    m_human: torch.Tensor,
    logits: torch.Tensor,
    labels: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Task loss plus pixel-averaged cross-entropy towards the per-pixel
    human term distributions. Returns (total, embedding term)."""
    if m.dim() == 3:
        m, m_human = m.unsqueeze(0), m_human.unsqueeze(0)
    ce = pixelwise_cross_entropy(m, m_human)
    return machine_loss(logits, labels) + ce, ce


def central_embedding_loss(
    hsv: torch.Tensor,
    assignment: torch.Tensor,
    centres_hv: torch.Tensor,
    logits: torch.Tensor,
    labels: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Task loss plus the fixed-centre colour term (saturation ignored).

    ``centres_hv`` is a (C, 2) tensor of human (hue, value) centres.
    Returns (total, embedding term)."""
    term = central_colour_reg(hsv, assignment, centres_hv)
    return machine_loss(logits, labels) + term, term
