"""Dynamic graph information bottleneck for robust future-link prediction."""
from .bounds import BoundConfig, LossBreakdown
from .dyngraph import DynamicGraph, GraphSnapshot, SplitSpec, generate_synthetic, load_dataset, save_dataset
from .harness import EvalReport, TrainConfig, apply_ablation, evaluate_auc, train
from .model import DGIBModel, ModelConfig

__all__ = [
    "BoundConfig",
    "DGIBModel",
    "DynamicGraph",
    "EvalReport",
    "GraphSnapshot",
    "LossBreakdown",
    "ModelConfig",
    "SplitSpec",
    "TrainConfig",
    "apply_ablation",
    "evaluate_auc",
    "generate_synthetic",
    "load_dataset",
    "save_dataset",
    "train",
]
