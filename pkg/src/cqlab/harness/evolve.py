"""Two-stage colour-naming evolution.

Stage one embeds a human colour system: the quantiser (with as many
colours as the target language has terms) trains against either the full
per-pixel term distributions or only the terms' central (hue, value)
colours. Stage two removes the colour-count restriction by cloning the
parent term's query row and encoder channel (plus symmetry-breaking
noise) into a C+1-colour model and continuing under a chosen loss
combination, then reports which pixels the new colour claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..colour import WCSGrid
from ..model import PaletteQuantizer, build_model, tie_safe_argmax, torch_rgb_to_hsv
from ..objectives import central_embedding_loss, full_embedding_loss, LossWeights
from ..recognition import SmallCNN, evaluate_top1, small_cnn_classifier
from ..wcs import (
    HumanWCSMap,
    MachineWCSMap,
    build_machine_wcs_map,
    human_term_centres,
    map_agreement,
    project_human_map,
)
from .config import EvolutionConfig
from .data import LabelledDataset, epoch_rng, iter_batches
from .train import TrainingDiverged, active_terms, train_step

EMBED_METRIC_FIELDS = ("epoch", "machine", "embedding", "total", "top1")


@dataclass
class EmbeddingResult:
    model: PaletteQuantizer
    classifier: SmallCNN
    metrics: list[dict]
    machine_map: MachineWCSMap
    agreement: float


@dataclass
class EvolutionReport:
    terms: tuple[str, ...]  # embedded terms plus the split-off colour
    parent_term: str
    parent_index: int
    loss_combo: str
    pre_map: MachineWCSMap
    post_map: MachineWCSMap
    pixel_shares: np.ndarray
    new_colour_share: float
    accuracy_trace: list[float] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "terms": list(self.terms),
            "parent_term": self.parent_term,
            "parent_index": self.parent_index,
            "loss_combo": self.loss_combo,
            "pixel_shares": [float(s) for s in self.pixel_shares],
            "new_colour_share": float(self.new_colour_share),
            "accuracy_trace": [float(a) for a in self.accuracy_trace],
        }


def machine_map_and_shares(
    model: PaletteQuantizer,
    dataset: LabelledDataset,
    grid: WCSGrid | None = None,
    batch_size: int = 256,
) -> tuple[MachineWCSMap, np.ndarray]:
    """Machine colour-naming map over a dataset plus per-colour pixel shares."""
    dtype = next(model.parameters()).dtype
    index_maps = []
    model.eval()
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            batch = dataset.images[start : start + batch_size]
            x = torch.from_numpy(np.ascontiguousarray(batch)).to(dtype).permute(0, 3, 1, 2)
            _, idx, _ = model.quantise_test_batch(x)
            index_maps.extend(idx.numpy())
    counts = np.bincount(
        np.concatenate([m.ravel() for m in index_maps]), minlength=model.n_colours
    )
    feed = iter(index_maps)
    mmap = build_machine_wcs_map(
        dataset.images, lambda img: next(feed), model.n_colours, grid
    )
    return mmap, counts / counts.sum()


def project_dataset(dataset: LabelledDataset, hmap: HumanWCSMap) -> np.ndarray:
    """Per-pixel human term distributions for every image, as (N, C, H, W)."""
    maps = np.empty(
        (len(dataset), hmap.n_terms) + dataset.images.shape[1:3], dtype=np.float32
    )
    for i in range(len(dataset)):
        maps[i] = project_human_map(dataset.images[i], hmap).transpose(2, 0, 1)
    return maps


def run_embedding_stage(
    cfg: EvolutionConfig,
    hmap: HumanWCSMap,
    dataset: LabelledDataset,
    eval_dataset: LabelledDataset | None = None,
) -> EmbeddingResult:
    """Train the quantiser to reproduce a human colour-naming system."""
    cfg.validate(hmap.terms)
    n_terms = hmap.n_terms
    eval_set = eval_dataset if eval_dataset is not None else dataset

    torch.manual_seed(cfg.seed)
    model = build_model(n_terms, cfg.query_dim, cfg.encoder_width, "attention", cfg.seed)
    classifier = small_cnn_classifier(dataset.num_classes, cfg.seed + 1)
    optimizer = torch.optim.SGD(
        list(model.parameters()) + list(classifier.parameters()),
        lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay,
    )
    human_maps = project_dataset(dataset, hmap) if cfg.embedding_mode == "full" else None
    centres = (
        torch.from_numpy(human_term_centres(hmap)) if cfg.embedding_mode == "central" else None
    )

    metrics: list[dict] = []
    for epoch in range(cfg.embedding_epochs):
        model.train()
        classifier.train()
        rng = epoch_rng(cfg.seed, epoch)
        sums = np.zeros(3)
        n_batches = 0
        for idx, x, y in iter_batches(dataset, cfg.batch_size, rng):
            xq, m, _ = model.quantise_train_batch(x, cfg.tau_embed)
            logits = classifier(xq)
            if cfg.embedding_mode == "full":
                target = torch.from_numpy(human_maps[idx]).to(m.dtype)
                total, term = full_embedding_loss(m, target, logits, y)
            else:
                assignment = tie_safe_argmax(m).detach()
                total, term = central_embedding_loss(
                    torch_rgb_to_hsv(xq), assignment, centres, logits, y
                )
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            if not math.isfinite(float(total)):
                raise TrainingDiverged(f"non-finite embedding loss at epoch {epoch}")
            sums += (float(total) - float(term), float(term), float(total))
            n_batches += 1
        model.eval()
        top1 = evaluate_top1(
            classifier, lambda b: model.quantise_test_batch(b)[0], eval_set
        ).top1
        means = sums / max(n_batches, 1)
        metrics.append(
            {"epoch": epoch, "machine": means[0], "embedding": means[1],
             "total": means[2], "top1": top1}
        )

    machine_map, _ = machine_map_and_shares(model, dataset)
    return EmbeddingResult(
        model, classifier, metrics, machine_map, map_agreement(machine_map, hmap)
    )


def expand_colour(
    model: PaletteQuantizer, parent_index: int, noise_std: float = 1e-3, seed: int = 0
) -> PaletteQuantizer:
    """Clone a trained C-colour quantiser into C+1 colours.

    Tensors whose leading axis is the colour count (reference palette
    queries, encoder head) gain one row copied from the parent colour plus
    small normal noise so the twin colours can diverge under training.
    """
    if not 0 <= parent_index < model.n_colours:
        raise ValueError(f"parent index {parent_index} outside [0, {model.n_colours})")
    expanded = PaletteQuantizer(
        model.n_colours + 1, model.query_dim, model.encoder_width, model.palette_mode
    )
    gen = torch.Generator().manual_seed(seed)
    source = model.state_dict()
    target = expanded.state_dict()
    merged = {}
    for name, tensor in source.items():
        if target[name].shape == tensor.shape:
            merged[name] = tensor.clone()
        else:
            grown = torch.empty_like(target[name])
            grown[: tensor.shape[0]] = tensor
            noise = torch.empty_like(tensor[parent_index]).normal_(
                0.0, noise_std, generator=gen
            )
            grown[tensor.shape[0]] = tensor[parent_index] + noise
            merged[name] = grown
    expanded.load_state_dict(merged)
    return expanded


def run_evolution_stage(
    embedded: EmbeddingResult | tuple[PaletteQuantizer, SmallCNN],
    cfg: EvolutionConfig,
    dataset: LabelledDataset,
    hmap: HumanWCSMap,
    eval_dataset: LabelledDataset | None = None,
) -> EvolutionReport:
    """Split a new colour from the parent term and train it into place."""
    cfg.validate(hmap.terms)
    model, classifier = (
        (embedded.model, embedded.classifier)
        if isinstance(embedded, EmbeddingResult)
        else embedded
    )
    if model.n_colours != hmap.n_terms:
        raise ValueError("model colour count must match the embedded term count")
    parent_index = hmap.terms.index(cfg.parent_term)
    eval_set = eval_dataset if eval_dataset is not None else dataset

    pre_map, _ = machine_map_and_shares(model, dataset)
    expanded = expand_colour(model, parent_index, cfg.split_noise, seed=cfg.seed + 777)
    use_terms = active_terms(cfg.loss_combo)
    weights = LossWeights(cfg.alpha, cfg.beta, cfg.gamma)
    optimizer = torch.optim.SGD(
        list(expanded.parameters()) + list(classifier.parameters()),
        lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay,
    )

    accuracy_trace: list[float] = []
    metrics: list[dict] = []
    for epoch in range(cfg.evolution_epochs):
        expanded.train()
        classifier.train()
        rng = epoch_rng(cfg.seed, 10_000 + epoch)
        sums = np.zeros(5)
        n_batches = 0
        for _, x, y in iter_batches(dataset, cfg.batch_size, rng):
            report = train_step(
                expanded, classifier, optimizer, x, y, cfg.tau_embed, weights, use_terms
            )
            if not math.isfinite(report.total):
                raise TrainingDiverged(f"non-finite evolution loss at epoch {epoch}")
            sums += (report.machine, report.colour, report.diversity,
                     report.perceptual, report.total)
            n_batches += 1
        expanded.eval()
        top1 = evaluate_top1(
            classifier, lambda b: expanded.quantise_test_batch(b)[0], eval_set
        ).top1
        accuracy_trace.append(top1)
        means = sums / max(n_batches, 1)
        metrics.append(
            {"epoch": epoch, "machine": means[0], "colour": means[1],
             "diversity": means[2], "perceptual": means[3], "total": means[4],
             "top1": top1}
        )

    post_map, shares = machine_map_and_shares(expanded, dataset)
    return EvolutionReport(
        terms=hmap.terms + (f"{cfg.parent_term}+",),
        parent_term=cfg.parent_term,
        parent_index=parent_index,
        loss_combo=cfg.loss_combo,
        pre_map=pre_map,
        post_map=post_map,
        pixel_shares=shares,
        new_colour_share=float(shares[-1]),
        accuracy_trace=accuracy_trace,
        metrics=metrics,
    )
