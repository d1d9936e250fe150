"""Cross-checks between the numpy and compiled split/traverse backends."""

import os
import subprocess
import sys

import numpy as np
import pytest

from latentwire.forest import kernels
from latentwire.forest.model import ForestConfig, train_forest

cython_available = "cython" in kernels.available_backends()
needs_cython = pytest.mark.skipif(not cython_available,
                                  reason="compiled backend not built")


def random_node(seed, rows=200, dim=7):
    rng = np.random.default_rng(seed)
    features = rng.random((rows, dim), dtype=np.float32)
    # quantize some columns so repeated values (and boundary ties) occur
    features[:, ::2] = np.round(features[:, ::2] * 4) / 4
    labels = (features[:, 0] + features[:, 1] * 0.5
              + rng.normal(0, 0.2, rows) > 0.7).astype(np.uint8)
    sample_idx = rng.choice(rows, size=rows, replace=True).astype(np.int64)
    candidates = np.sort(rng.choice(dim, size=3, replace=False)).astype(np.int64)
    return features, labels, sample_idx, candidates


@needs_cython
def test_backends_pick_identical_splits():
    py = kernels.load_backend("numpy")
    cy = kernels.load_backend("cython")
    for seed in range(30):
        features, labels, rows, candidates = random_node(seed)
        got_py = py.best_split(features, labels, rows, candidates)
        got_cy = cy.best_split(features, labels, rows, candidates)
        assert got_py[0] == got_cy[0], seed
        assert got_py[1] == got_cy[1], seed  # thresholds bit-identical
        assert got_py[2] == pytest.approx(got_cy[2], abs=1e-9)


@needs_cython
def test_backends_grow_identical_forests(monkeypatch):
    rng = np.random.default_rng(77)
    features = rng.random((300, 8), dtype=np.float32)
    labels = (features[:, 2] * features[:, 5] > 0.25).astype(np.uint8)
    config = ForestConfig(n_trees=12, seed=31)

    roots = {}
    preds = {}
    for name in ("numpy", "cython"):
        impl = kernels.load_backend(name)
        monkeypatch.setattr(kernels, "best_split", impl.best_split)
        monkeypatch.setattr(kernels, "traverse", impl.traverse)
        forest = train_forest(features, labels, config)
        roots[name] = [t.root for t in forest.trees]
        preds[name] = forest.predict(features)
    assert roots["numpy"] == roots["cython"]
    assert np.array_equal(preds["numpy"], preds["cython"])


@needs_cython
def test_traverse_backends_agree_on_deep_trees():
    py = kernels.load_backend("numpy")
    cy = kernels.load_backend("cython")
    rng = np.random.default_rng(13)
    features = rng.random((500, 5), dtype=np.float32)
    labels = rng.integers(0, 2, size=500).astype(np.uint8)
    forest = train_forest(features, labels, ForestConfig(n_trees=4, seed=8))
    probe = rng.random((200, 5), dtype=np.float32)
    for tree in forest.trees:
        flat = tree.flattened()
        assert np.array_equal(py.traverse(*flat, probe), cy.traverse(*flat, probe))


def recursive_route(node, x):
    while "class" not in node:
        node = node["l"] if x[node["f"]] <= node["t"] else node["r"]
    return node["class"]


def test_traverse_matches_recursive_walk():
    rng = np.random.default_rng(19)
    features = rng.random((400, 6), dtype=np.float32)
    labels = (features[:, 1] > features[:, 4]).astype(np.uint8)
    forest = train_forest(features, labels, ForestConfig(n_trees=3, seed=15))
    probe = rng.random((100, 6), dtype=np.float32)
    for tree in forest.trees:
        expected = [recursive_route(tree.root, row) for row in probe]
        assert tree.predict(probe).tolist() == expected


def test_best_split_returns_sentinel_for_pure_node():
    features = np.array([[0.0], [1.0], [2.0]], dtype=np.float32)
    rows = np.arange(3, dtype=np.int64)
    candidates = np.array([0], dtype=np.int64)
    for labels in ([0, 0, 0], [1, 1, 1]):
        got = kernels.best_split(features, np.array(labels, dtype=np.uint8),
                                 rows, candidates)
        assert got == (-1, 0.0, 0.0)


def test_best_split_returns_sentinel_for_constant_columns():
    features = np.full((4, 2), 0.5, dtype=np.float32)
    labels = np.array([0, 1, 0, 1], dtype=np.uint8)
    got = kernels.best_split(features, labels, np.arange(4, dtype=np.int64),
                             np.array([0, 1], dtype=np.int64))
    assert got == (-1, 0.0, 0.0)


def test_best_split_ignores_rows_outside_the_sample():
    # rows outside sample_idx must not influence the choice
    features = np.array([[0.0], [1.0], [5.0], [9.0]], dtype=np.float32)
    labels = np.array([0, 1, 1, 0], dtype=np.uint8)
    rows = np.array([0, 1], dtype=np.int64)
    feature, threshold, gain = kernels.best_split(
        features, labels, rows, np.array([0], dtype=np.int64))
    assert feature == 0
    assert threshold == 0.5
    assert gain == pytest.approx(1.0, abs=1e-12)


def test_best_split_counts_repeated_rows():
    # a bootstrap sample may repeat a row; weights follow the repetition
    features = np.array([[0.0], [1.0]], dtype=np.float32)
    labels = np.array([0, 1], dtype=np.uint8)
    rows = np.array([0, 1, 1, 1], dtype=np.int64)
    feature, threshold, gain = kernels.best_split(
        features, labels, rows, np.array([0], dtype=np.int64))
    assert feature == 0
    assert threshold == 0.5
    # parent entropy of {0,1,1,1} is the whole gain for a perfect split
    assert gain == pytest.approx(0.8112781244591328, abs=1e-12)


def test_pure_env_flag_forces_numpy_backend():
    env = dict(os.environ, LATENTWIRE_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c",
         "from latentwire.forest import kernels; print(kernels.BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == "numpy"


@needs_cython
def test_default_import_prefers_compiled_backend():
    env = {k: v for k, v in os.environ.items() if k != "LATENTWIRE_PURE"}
    out = subprocess.run(
        [sys.executable, "-c",
         "from latentwire.forest import kernels; print(kernels.BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == "cython"


def test_load_backend_rejects_unknown_name():
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")
