"""Checkpoint archives: a single ``.npz`` file of named tensors plus a
JSON manifest.

Layout (array names inside the archive):

* ``manifest``          - UTF-8 JSON bytes: format tag, model geometry
  (colours, query_dim, encoder_width, palette_mode), classifier geometry,
  temperature, and free-form ``extra`` entries (epoch counters, config).
* ``model/<name>``      - every entry of the quantiser's state dict.
* ``clf/<name>``        - classifier state dict, when a classifier is saved.
* ``opt/<name>``        - SGD momentum buffers keyed by parameter name.

No pickled objects are stored; everything round-trips through plain
numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch

from .model import PaletteQuantizer
from .recognition import SmallCNN

FORMAT_TAG = "cqlab-checkpoint"


@dataclass
class CheckpointBundle:
    model: PaletteQuantizer
    classifier: SmallCNN | None
    manifest: dict
    optimizer_state: dict[str, np.ndarray]


def _named_parameters(model, classifier):
    for name, p in model.named_parameters():
        yield f"model/{name}", p
    if classifier is not None:
        for name, p in classifier.named_parameters():
            yield f"clf/{name}", p


def save_checkpoint(
    path,
    model: PaletteQuantizer,
    classifier: SmallCNN | None = None,
    tau: float | None = None,
    extra: dict | None = None,
    optimizer: torch.optim.Optimizer | None = None,
) -> None:
    manifest = {
        "format": FORMAT_TAG,
        "version": 1,
        "model": {
            "n_colours": model.n_colours,
            "query_dim": model.query_dim,
            "encoder_width": model.encoder_width,
            "palette_mode": model.palette_mode,
        },
        "classifier": {"num_classes": classifier.num_classes} if classifier is not None else None,
        "tau": tau,
        "extra": extra or {},
    }
    arrays = {"manifest": np.frombuffer(json.dumps(manifest).encode("utf-8"), dtype=np.uint8)}
    for name, tensor in model.state_dict().items():
        arrays[f"model/{name}"] = tensor.detach().numpy()
    if classifier is not None:
        for name, tensor in classifier.state_dict().items():
            arrays[f"clf/{name}"] = tensor.detach().numpy()
    if optimizer is not None:
        for name, p in _named_parameters(model, classifier):
            state = optimizer.state.get(p)
            if state and "momentum_buffer" in state and state["momentum_buffer"] is not None:
                arrays[f"opt/{name}"] = state["momentum_buffer"].detach().numpy()
    np.savez(path, **arrays)


def load_checkpoint(path) -> CheckpointBundle:
    with np.load(path) as npz:
        arrays = {name: npz[name] for name in npz.files}
    if "manifest" not in arrays:
        raise ValueError(f"{path}: not a checkpoint archive (no manifest)")
    manifest = json.loads(bytes(arrays["manifest"]).decode("utf-8"))
    if manifest.get("format") != FORMAT_TAG:
        raise ValueError(f"{path}: unexpected archive format {manifest.get('format')!r}")

    model = PaletteQuantizer(**manifest["model"])
    model.load_state_dict(
        {
            name[len("model/") :]: torch.from_numpy(arr.copy())
            for name, arr in arrays.items()
            if name.startswith("model/")
        }
    )
    classifier = None
    if manifest.get("classifier"):
        classifier = SmallCNN(manifest["classifier"]["num_classes"])
        classifier.load_state_dict(
            {
                name[len("clf/") :]: torch.from_numpy(arr.copy())
                for name, arr in arrays.items()
                if name.startswith("clf/")
            }
        )
    optimizer_state = {
        name[len("opt/") :]: arr for name, arr in arrays.items() if name.startswith("opt/")
    }
    return CheckpointBundle(model, classifier, manifest, optimizer_state)


def restore_momentum(
    optimizer: torch.optim.Optimizer,
    model: PaletteQuantizer,
    classifier: SmallCNN | None,
    optimizer_state: dict[str, np.ndarray],
) -> None:
    """Reattach saved momentum buffers to an optimizer over the same parameters."""
    for name, p in _named_parameters(model, classifier):
        if name in optimizer_state:
            optimizer.state[p]["momentum_buffer"] = torch.from_numpy(
                optimizer_state[name].copy()
            ).to(p.dtype)
