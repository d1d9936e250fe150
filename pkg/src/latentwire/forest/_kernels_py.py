"""Pure-numpy split search and tree traversal.

The compiled backend in _kernels_cy implements the same two functions with
the same selection semantics; keep the two in lockstep.  Gains are compared
with a small epsilon so that mathematically equal candidates resolve to the
same (lowest feature, lowest threshold) winner on both backends despite
last-bit differences between vectorized and scalar log2.
"""

from __future__ import annotations

import numpy as np

GAIN_EPS = 1e-12


def _plog2p(p: np.ndarray) -> np.ndarray:
    # p * log2(p), with the 0 * log2(0) = 0 convention
    safe = np.maximum(p, 1e-300)
    return np.where(p > 0.0, p * np.log2(safe), 0.0)


def _entropy(pos: np.ndarray, total: np.ndarray) -> np.ndarray:
    p = pos / total
    return -(_plog2p(p) + _plog2p(1.0 - p))


def best_split(features: np.ndarray, labels: np.ndarray, sample_idx: np.ndarray,
               candidate_features: np.ndarray) -> tuple[int, float, float]:
    """Highest-information-gain split over the given rows and columns.

    Thresholds are midpoints between consecutive distinct sorted values of a
    column.  candidate_features must be ascending.  Returns
    (feature, threshold, gain), or (-1, 0.0, 0.0) when no candidate splits
    the rows (pure node or all-constant columns).
    """
    n = int(sample_idx.size)
    node_labels = labels[sample_idx]
    total_pos = int(node_labels.sum())
    if total_pos == 0 or total_pos == n:
        return -1, 0.0, 0.0
    parent_h = float(_entropy(np.float64(total_pos), np.float64(n)))

    best_feature = -1
    best_threshold = 0.0
    best_gain = 0.0
    for f in candidate_features:
        column = features[sample_idx, f].astype(np.float64)
        order = np.argsort(column, kind="stable")
        values = column[order]
        sorted_labels = node_labels[order].astype(np.int64)
        boundaries = np.nonzero(values[1:] != values[:-1])[0]
        if boundaries.size == 0:
            continue
        left_count = (boundaries + 1).astype(np.float64)
        left_pos = np.cumsum(sorted_labels)[boundaries].astype(np.float64)
        right_count = n - left_count
        right_pos = total_pos - left_pos
        gains = (parent_h
                 - (left_count / n) * _entropy(left_pos, left_count)
                 - (right_count / n) * _entropy(right_pos, right_count))
        feature_max = float(np.max(gains))
        j = int(np.argmax(gains >= feature_max - GAIN_EPS))  # lowest threshold within eps of the max
        gain = float(gains[j])
        if gain > best_gain + GAIN_EPS:
            best_feature = int(f)
            best_threshold = (values[boundaries[j]] + values[boundaries[j] + 1]) / 2.0
            best_gain = gain
    if best_gain <= GAIN_EPS:
        return -1, 0.0, 0.0
    return best_feature, float(best_threshold), best_gain


def traverse(node_feature: np.ndarray, node_threshold: np.ndarray, node_left: np.ndarray,
             node_right: np.ndarray, node_class: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Route every row of `features` to a leaf; returns the leaf classes.

    Node arrays are parallel: node_feature < 0 marks a leaf whose prediction
    is node_class; internal nodes send rows with value <= threshold left.
    """
    n = features.shape[0]
    out = np.empty(n, dtype=np.uint8)
    position = np.zeros(n, dtype=np.int64)
    active = np.arange(n, dtype=np.int64)
    while active.size:
        nodes = position[active]
        at_leaf = node_feature[nodes] < 0
        done = active[at_leaf]
        out[done] = node_class[position[done]].astype(np.uint8)
        active = active[~at_leaf]
        if active.size == 0:
            break
        nodes = position[active]
        go_left = features[active, node_feature[nodes]] <= node_threshold[nodes]
        position[active] = np.where(go_left, node_left[nodes], node_right[nodes])
    return out
