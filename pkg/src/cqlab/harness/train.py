"""Joint optimisation of the quantiser and the downstream classifier.

The loop is fully deterministic given (seed, config, dataset): model and
classifier initialisation derive from the seed, batch order and
augmentation draws derive statelessly from (seed, epoch), and no other
source of randomness is used, so resuming from a checkpoint reproduces
the uninterrupted trajectory bit for bit.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from ..checkpoint import load_checkpoint, restore_momentum, save_checkpoint
from ..model import PaletteQuantizer, build_model, tie_safe_argmax, torch_rgb_to_hsv
from ..objectives import (
    LossWeights,
    diversity_reg,
    intra_cluster_colour_reg,
    machine_loss,
    perceptual_loss,
    total_loss,
)
from ..recognition import SmallCNN, evaluate_top1, small_cnn_classifier
from .config import TrainConfig
from .data import LabelledDataset, epoch_rng, iter_batches

METRIC_FIELDS = ("epoch", "machine", "colour", "diversity", "perceptual", "total", "top1")


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, snapshot: str | None = None):
        super().__init__(message + (f" (snapshot: {snapshot})" if snapshot else ""))
        self.snapshot = snapshot


@dataclass
class TrainResult:
    model: PaletteQuantizer
    classifier: SmallCNN
    metrics: list[dict] = field(default_factory=list)
    checkpoint_path: str | None = None


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Closed-form cosine schedule restarting every ``restart_period`` epochs."""
    if cfg.scheduler == "constant":
        return cfg.lr
    t = epoch % cfg.restart_period
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * t / cfg.restart_period))


def active_terms(selector: str) -> tuple[bool, bool, bool]:
    """(colour, diversity, perceptual) activity for a loss-combination name."""
    if selector in ("full", "M+Colour+Div+Perceptual"):
        return True, True, True
    if selector == "M":
        return False, False, False
    if selector == "M+Div":
        return False, True, False
    raise ValueError(f"unknown loss combination {selector!r}")


def make_optimizer(cfg, model, classifier) -> torch.optim.SGD:
    params = list(model.parameters()) + list(classifier.parameters())
    return torch.optim.SGD(
        params, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
    )


def train_step(model, classifier, optimizer, x, y, tau, weights, use_terms=(True, True, True)):
    """One SGD step on the joint objective; returns the loss report."""
    use_colour, use_div, use_perc = use_terms
    xq, m, _ = model.quantise_train_batch(x, tau)
    logits = classifier(xq)
    l_m = machine_loss(logits, y)
    r_colour = 0.0
    if use_colour and weights.alpha > 0:
        assignment = tie_safe_argmax(m).detach()
        r_colour = intra_cluster_colour_reg(torch_rgb_to_hsv(xq), assignment, model.n_colours)
    r_div = diversity_reg(m) if use_div and weights.beta > 0 and model.n_colours >= 2 else 0.0
    l_perc = perceptual_loss(xq, x) if use_perc and weights.gamma > 0 else 0.0
    masked = LossWeights(
        weights.alpha if use_colour else 0.0,
        weights.beta if use_div else 0.0,
        weights.gamma if use_perc else 0.0,
    )
    total, report = total_loss(l_m, r_colour, r_div, l_perc, masked)
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return report


def train_joint(
    cfg: TrainConfig,
    dataset: LabelledDataset,
    eval_dataset: LabelledDataset | None = None,
    out_dir: str | None = None,
    resume_from: str | None = None,
    loss_selector: str = "full",
) -> TrainResult:
    """Minimise the composite objective with momentum SGD.

    Writes a checkpoint per epoch when ``out_dir`` is given; raises
    TrainingDiverged (with a diagnostic snapshot when possible) if the
    loss stops being finite.
    """
    cfg.validate()
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    use_terms = active_terms(loss_selector)
    weights = LossWeights(cfg.alpha, cfg.beta, cfg.gamma)
    eval_set = eval_dataset if eval_dataset is not None else dataset

    torch.manual_seed(cfg.seed)
    start_epoch = 0
    if resume_from is not None:
        bundle = load_checkpoint(resume_from)
        model, classifier = bundle.model, bundle.classifier
        if classifier is None:
            raise ValueError("checkpoint has no classifier; cannot resume joint training")
        optimizer = make_optimizer(cfg, model, classifier)
        restore_momentum(optimizer, model, classifier, bundle.optimizer_state)
        start_epoch = int(bundle.manifest["extra"].get("epochs_completed", 0))
    else:
        model = build_model(
            cfg.colours, cfg.query_dim, cfg.encoder_width, cfg.palette_mode, cfg.seed
        )
        classifier = small_cnn_classifier(dataset.num_classes, cfg.seed + 1)
        optimizer = make_optimizer(cfg, model, classifier)

    metrics: list[dict] = []
    checkpoint_path = None
    for epoch in range(start_epoch, cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        classifier.train()
        rng = epoch_rng(cfg.seed, epoch)
        sums = np.zeros(5)
        n_batches = 0
        for _, x, y in iter_batches(dataset, cfg.batch_size, rng, augment=cfg.augment):
            report = train_step(
                model, classifier, optimizer, x, y, cfg.tau, weights, use_terms
            )
            if not math.isfinite(report.total):
                snapshot = None
                if out_dir:
                    snapshot = os.path.join(out_dir, "diverged.npz")
                    save_checkpoint(
                        snapshot, model, classifier, tau=cfg.tau,
                        extra={"epochs_completed": epoch, "diverged": True},
                    )
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}", snapshot
                )
            sums += (report.machine, report.colour, report.diversity,
                     report.perceptual, report.total)
            n_batches += 1

        model.eval()
        result = evaluate_top1(
            classifier, lambda b: model.quantise_test_batch(b)[0], eval_set
        )
        means = sums / max(n_batches, 1)
        metrics.append(
            {
                "epoch": epoch,
                "machine": means[0],
                "colour": means[1],
                "diversity": means[2],
                "perceptual": means[3],
                "total": means[4],
                "top1": result.top1,
            }
        )
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            checkpoint_path = os.path.join(out_dir, f"checkpoint_epoch_{epoch:03d}.npz")
            save_checkpoint(
                checkpoint_path, model, classifier, tau=cfg.tau,
                extra={"epochs_completed": epoch + 1, "loss_selector": loss_selector},
                optimizer=optimizer,
            )
    return TrainResult(model, classifier, metrics, checkpoint_path)
