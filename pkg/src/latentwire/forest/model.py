"""Random forest over compressed (or raw) feature vectors.

Trees grow greedily on information gain with midpoint thresholds; each
tree gets its own bootstrap resample and RNG stream spawned from the
forest seed, so results are reproducible regardless of tree count or
kernel backend.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from . import kernels
from .metrics import MetricsReport, compute_metrics

FOREST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: int | None = None  # None: ceil(sqrt(dimension))
    max_depth: int | None = None
    min_samples_split: int = 2
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth cannot be negative")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_features": self.max_features,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }


def entropy(labels: np.ndarray) -> float:
    """Shannon entropy (bits) of a binary label multiset; 0 log 0 reads as 0."""
    labels = _as_binary(labels, "labels")
    if labels.size == 0:
        raise ValueError("entropy of an empty label set is undefined")
    pos = int(labels.sum())
    return _entropy_counts(pos, labels.size)


def information_gain(parent_labels, left_labels, right_labels) -> float:
    """Entropy reduction of splitting `parent_labels` into the two children.

    The children must partition the parent exactly (as a multiset).
    """
    parent = _as_binary(parent_labels, "parent")
    left = _as_binary(left_labels, "left")
    right = _as_binary(right_labels, "right")
    if parent.size == 0:
        raise ValueError("information gain over an empty parent is undefined")
    if left.size + right.size != parent.size:
        raise ValueError("left and right must partition the parent")
    merged = np.bincount(left, minlength=2) + np.bincount(right, minlength=2)
    if not np.array_equal(merged, np.bincount(parent, minlength=2)):
        raise ValueError("left and right must partition the parent")
    n = parent.size
    gain = _entropy_counts(int(parent.sum()), n)
    for side in (left, right):
        if side.size:
            gain -= (side.size / n) * _entropy_counts(int(side.sum()), side.size)
    return gain


def _as_binary(labels, name: str) -> np.ndarray:
    arr = np.asarray(labels).astype(np.int64).ravel()
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0/1 labels")
    return arr


def _entropy_counts(pos: int, total: int) -> float:
    h = 0.0
    for count in (pos, total - pos):
        if count > 0:
            p = count / total
            h -= p * math.log2(p)
    return h


@dataclass
class Tree:
    """One decision tree as nested dicts.

    Internal nodes: {"f": feature, "t": threshold, "l": ..., "r": ...};
    leaves: {"class": 0|1, "counts": [normal, attack]}.
    """

    root: dict
    _flat: tuple | None = field(default=None, repr=False, compare=False)

    def predict(self, features: np.ndarray) -> np.ndarray:
        node_feature, node_threshold, node_left, node_right, node_class = self.flattened()
        return kernels.traverse(node_feature, node_threshold, node_left, node_right,
                                node_class, features)

    def flattened(self) -> tuple:
        if self._flat is None:
            feats, thresholds, lefts, rights, classes = [], [], [], [], []

            def add(node: dict) -> int:
                idx = len(feats)
                if "class" in node:
                    feats.append(-1)
                    thresholds.append(0.0)
                    lefts.append(-1)
                    rights.append(-1)
                    classes.append(int(node["class"]))
                else:
                    feats.append(int(node["f"]))
                    thresholds.append(float(node["t"]))
                    lefts.append(-1)
                    rights.append(-1)
                    classes.append(-1)
                    lefts[idx] = add(node["l"])
                    rights[idx] = add(node["r"])
                return idx

            add(self.root)
            self._flat = (
                np.asarray(feats, dtype=np.int32),
                np.asarray(thresholds, dtype=np.float64),
                np.asarray(lefts, dtype=np.int32),
                np.asarray(rights, dtype=np.int32),
                np.asarray(classes, dtype=np.int32),
            )
        return self._flat

    @property
    def node_count(self) -> int:
        return len(self.flattened()[0])

    @property
    def depth(self) -> int:
        def walk(node: dict) -> int:
            if "class" in node:
                return 0
            return 1 + max(walk(node["l"]), walk(node["r"]))

        return walk(self.root)


@dataclass
class TrainedForest:
    trees: list[Tree]
    config: ForestConfig
    dimension: int
    train_seconds: float

    def _votes(self, features: np.ndarray) -> np.ndarray:
        features = np.ascontiguousarray(features, dtype=np.float32)
        if features.ndim != 2 or features.shape[1] != self.dimension:
            raise ShapeError(f"forest expects (n, {self.dimension}) features, got {features.shape}")
        votes = np.zeros(features.shape[0], dtype=np.int64)
        for tree in self.trees:
            votes += tree.predict(features)
        return votes

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Majority vote over trees; exact ties call it an attack."""
        votes = self._votes(features)
        return (2 * votes >= len(self.trees)).astype(np.uint8)

    def vote_fraction(self, features: np.ndarray) -> np.ndarray:
        """Fraction of trees voting attack, per record."""
        return self._votes(features) / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "version": FOREST_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "dimension": self.dimension,
            "train_seconds": self.train_seconds,
            "trees": [tree.root for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedForest":
        if data.get("version") != FOREST_FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {data.get('version')!r}")
        return cls(
            trees=[Tree(root) for root in data["trees"]],
            config=ForestConfig(**data["config"]),
            dimension=int(data["dimension"]),
            train_seconds=float(data.get("train_seconds", 0.0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TrainedForest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _grow(X: np.ndarray, y: np.ndarray, rows: np.ndarray, rng: np.random.Generator,
          max_features: int, config: ForestConfig, depth: int) -> dict:
    node_labels = y[rows]
    pos = int(node_labels.sum())
    n = rows.size

    def leaf() -> dict:
        return {"class": 1 if 2 * pos >= n else 0, "counts": [int(n - pos), int(pos)]}

    if pos == 0 or pos == n or n < config.min_samples_split:
        return leaf()
    if config.max_depth is not None and depth >= config.max_depth:
        return leaf()
    candidates = np.sort(rng.choice(X.shape[1], size=max_features, replace=False)).astype(np.int64)
    feature, threshold, _gain = kernels.best_split(X, y, rows, candidates)
    if feature < 0:
        return leaf()
    go_left = X[rows, feature] <= threshold
    return {
        "f": int(feature),
        "t": float(threshold),
        "l": _grow(X, y, rows[go_left], rng, max_features, config, depth + 1),
        "r": _grow(X, y, rows[~go_left], rng, max_features, config, depth + 1),
    }


def train_forest(features: np.ndarray, labels: np.ndarray, config: ForestConfig) -> TrainedForest:
    """Grow config.n_trees trees on bootstrap resamples of the training set."""
    X = np.ascontiguousarray(features, dtype=np.float32)
    y = np.ascontiguousarray(labels, dtype=np.uint8)
    if X.ndim != 2:
        raise ShapeError(f"features must be 2-d, got {X.shape}")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"labels {y.shape} do not match features {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("cannot train a forest on zero records")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 (normal) or 1 (attack)")

    n, d = X.shape
    max_features = config.max_features if config.max_features is not None else math.ceil(math.sqrt(d))
    max_features = min(max_features, d)

    started = time.perf_counter()
    trees = []
    for stream in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.default_rng(stream)
        if config.bootstrap:
            rows = rng.integers(0, n, size=n, dtype=np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        trees.append(Tree(_grow(X, y, rows, rng, max_features, config, depth=0)))
    return TrainedForest(trees=trees, config=config, dimension=d,
                         train_seconds=time.perf_counter() - started)


def evaluate_forest(forest: TrainedForest, features: np.ndarray, labels: np.ndarray) -> MetricsReport:
    return compute_metrics(np.asarray(labels), forest.predict(features))
