from .kernels import BACKEND, available_backends, load_backend
from .metrics import ConfusionCounts, MetricsReport, compute_metrics
from .model import (
    FOREST_FORMAT_VERSION,
    ForestConfig,
    TrainedForest,
    Tree,
    entropy,
    evaluate_forest,
    information_gain,
    train_forest,
)

__all__ = [
    "BACKEND",
    "available_backends",
    "load_backend",
    "ConfusionCounts",
    "MetricsReport",
    "compute_metrics",
    "FOREST_FORMAT_VERSION",
    "ForestConfig",
    "TrainedForest",
    "Tree",
    "entropy",
    "evaluate_forest",
    "information_gain",
    "train_forest",
]
