"""Training and export for the six-class ion image structure classifier."""

from .config import TrainConfig
from .data import (
    IonImageDataset,
    LabeledImages,
    SplitPlan,
    build_training_set,
    generate_training_corpus,
    make_class_weighted_sampler,
)
from .errors import DivergedLoss, ExportFailure, TrainerError, UnresolvableEntryWarning
from .export import export_scorer, model_to_onnx, predict_probs
from .model import TinyStructureNet
from .train import TrainResult, evaluate, load_checkpoint, train

__all__ = [
    "TrainConfig",
    "IonImageDataset",
    "LabeledImages",
    "SplitPlan",
    "build_training_set",
    "generate_training_corpus",
    "make_class_weighted_sampler",
    "DivergedLoss",
    "ExportFailure",
    "TrainerError",
    "UnresolvableEntryWarning",
    "export_scorer",
    "model_to_onnx",
    "predict_probs",
    "TinyStructureNet",
    "TrainResult",
    "evaluate",
    "load_checkpoint",
    "train",
]

__version__ = "0.1.0"
