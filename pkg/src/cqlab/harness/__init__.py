"""Training, dataset ingestion, and the two-stage colour evolution protocol."""

from .config import EvolutionConfig, TrainConfig, load_config, save_config
from .data import (
    LabelledDataset,
    ingest_dataset,
    make_chip_cluster_dataset,
    make_colour_separable_dataset,
    write_cifar_batch,
)
from .evolve import (
    EmbeddingResult,
    EvolutionReport,
    expand_colour,
    run_embedding_stage,
    run_evolution_stage,
)
from .train import TrainingDiverged, TrainResult, train_joint

__all__ = [
    "EvolutionConfig",
    "TrainConfig",
    "load_config",
    "save_config",
    "LabelledDataset",
    "ingest_dataset",
    "make_chip_cluster_dataset",
    "make_colour_separable_dataset",
    "write_cifar_batch",
    "EmbeddingResult",
    "EvolutionReport",
    "expand_colour",
    "run_embedding_stage",
    "run_evolution_stage",
    "TrainingDiverged",
    "TrainResult",
    "train_joint",
]
