"""Validators: GGNN over program graphs, its invariant-only ablation, and a bi-GRU baseline."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encode import EmptyInput, EmptyInvariantNodes, VocabularyMismatch
from .ggnn import GgnnConfig
from .rnn import RnnConfig
from .train import Divergence, TrainResult, predict, predict_checkpoint, train

__all__ = [
    "Checkpoint",
    "Divergence",
    "EmptyInput",
    "EmptyInvariantNodes",
    "GgnnConfig",
    "RnnConfig",
    "TrainResult",
    "VocabularyMismatch",
    "load_checkpoint",
    "predict",
    "predict_checkpoint",
    "save_checkpoint",
    "train",
]
