"""Benchmark the compiled split-search/traversal kernels against the NumPy fallback.

Split search and tree traversal dominate forest runtime, which is why they
are the only compiled code in the package. This script times both backends
on the same synthetic workload and reports the speedup.

Usage: python benchmarks/bench_split_kernels.py [--rows 4000] [--dim 16] [--trees 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from latentwire.forest import ForestConfig, available_backends, load_backend, train_forest
from latentwire.forest import kernels


def _workload(rows: int, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(rows, dim)).astype(np.float32)
    # Labels correlate with a random linear score so splits have real gain.
    score = features @ rng.normal(size=dim) + 0.3 * rng.normal(size=rows)
    labels = (score > np.median(score)).astype(np.uint8)
    return features, labels


def _time_backend(name: str, features: np.ndarray, labels: np.ndarray,
                  config: ForestConfig, repeats: int) -> tuple[float, float, np.ndarray]:
    backend = load_backend(name)
    saved = (kernels.BACKEND, kernels.best_split, kernels.traverse)
    kernels.BACKEND = name
    kernels.best_split = backend.best_split
    kernels.traverse = backend.traverse
    try:
        train_times, predict_times = [], []
        predictions = None
        for _ in range(repeats):
            start = time.perf_counter()
            forest = train_forest(features, labels, config)
            train_times.append(time.perf_counter() - start)
            start = time.perf_counter()
            predictions = forest.predict(features)
            predict_times.append(time.perf_counter() - start)
        return min(train_times), min(predict_times), predictions
    finally:
        kernels.BACKEND, kernels.best_split, kernels.traverse = saved


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=4000)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--trees", type=int, default=20)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    features, labels = _workload(args.rows, args.dim, args.seed)
    config = ForestConfig(n_trees=args.trees, seed=args.seed)
    print(f"workload: {args.rows} rows x {args.dim} features, "
          f"{args.trees} trees, best of {args.repeats}")

    results = {}
    reference = None
    for name in backends:
        train_s, predict_s, predictions = _time_backend(name, features, labels,
                                                        config, args.repeats)
        results[name] = (train_s, predict_s)
        print(f"  {name:>6}: train {train_s:8.3f} s   predict {predict_s:8.4f} s")
        if reference is None:
            reference = predictions
        elif not np.array_equal(reference, predictions):
            print("  WARNING: backends disagree on predictions")
            return 1

    if "cython" in results and "numpy" in results:
        print(f"speedup (numpy/cython): train {results['numpy'][0] / results['cython'][0]:.2f}x   "
              f"predict {results['numpy'][1] / results['cython'][1]:.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
