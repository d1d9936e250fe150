# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled split search and tree traversal.

Mirror of _kernels_py: identical selection semantics (epsilon-compared
gains, lowest feature then lowest threshold on ties) so forests built on
either backend match.  Sorting goes through np.argsort(kind="stable") on
both sides for identical orderings.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log2

cnp.import_array()

GAIN_EPS = 1e-12
cdef double _EPS = 1e-12


cdef inline double _entropy(double pos, double total) noexcept nogil:
    cdef double p, q, h
    if total <= 0.0:
        return 0.0
    p = pos / total
    q = 1.0 - p
    h = 0.0
    if p > 0.0:
        h -= p * log2(p)
    if q > 0.0:
        h -= q * log2(q)
    return h


def best_split(cnp.float32_t[:, ::1] features, cnp.uint8_t[::1] labels,
               cnp.int64_t[::1] sample_idx, cnp.int64_t[::1] candidate_features):
    """Highest-information-gain split; see _kernels_py.best_split."""
    cdef Py_ssize_t n = sample_idx.shape[0]
    cdef Py_ssize_t n_feats = candidate_features.shape[0]
    cdef Py_ssize_t i, fi, j, n_bound, best_j
    cdef long long f
    cdef long long total_pos = 0
    cdef double parent_h, gain, feature_max, left_h, right_h
    cdef double best_gain = 0.0
    cdef double best_threshold = 0.0
    cdef long long best_feature = -1
    cdef long long cum, left_n

    cdef cnp.uint8_t[::1] node_labels = np.empty(n, dtype=np.uint8)
    for i in range(n):
        node_labels[i] = labels[sample_idx[i]]
        total_pos += node_labels[i]
    if total_pos == 0 or total_pos == n:
        return -1, 0.0, 0.0
    parent_h = _entropy(<double>total_pos, <double>n)

    column_arr = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] column = column_arr
    cdef cnp.float64_t[::1] values = np.empty(n, dtype=np.float64)
    cdef cnp.uint8_t[::1] sorted_labels = np.empty(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] bound_pos = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] bound_cum = np.empty(n, dtype=np.int64)
    cdef cnp.float64_t[::1] gains = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] order

    for fi in range(n_feats):
        f = candidate_features[fi]
        for i in range(n):
            column[i] = <double>features[sample_idx[i], f]
        order = np.argsort(column_arr, kind="stable")
        for i in range(n):
            values[i] = column[order[i]]
            sorted_labels[i] = node_labels[order[i]]

        # boundary i sits between sorted positions i and i+1; record the
        # cumulative positive count at each boundary while scanning once
        n_bound = 0
        cum = 0
        for i in range(n - 1):
            cum += sorted_labels[i]
            if values[i + 1] != values[i]:
                bound_pos[n_bound] = i
                bound_cum[n_bound] = cum
                n_bound += 1
        if n_bound == 0:
            continue

        feature_max = -1.0
        for j in range(n_bound):
            left_n = bound_pos[j] + 1
            left_h = _entropy(<double>bound_cum[j], <double>left_n)
            right_h = _entropy(<double>(total_pos - bound_cum[j]), <double>(n - left_n))
            gain = (parent_h
                    - (<double>left_n / <double>n) * left_h
                    - (<double>(n - left_n) / <double>n) * right_h)
            gains[j] = gain
            if gain > feature_max:
                feature_max = gain
        best_j = 0
        for j in range(n_bound):
            if gains[j] >= feature_max - _EPS:
                best_j = j
                break
        gain = gains[best_j]
        if gain > best_gain + _EPS:
            best_feature = f
            best_threshold = (values[bound_pos[best_j]] + values[bound_pos[best_j] + 1]) / 2.0
            best_gain = gain

    if best_gain <= _EPS:
        return -1, 0.0, 0.0
    return int(best_feature), float(best_threshold), float(best_gain)


def traverse(cnp.int32_t[::1] node_feature, cnp.float64_t[::1] node_threshold,
             cnp.int32_t[::1] node_left, cnp.int32_t[::1] node_right,
             cnp.int32_t[::1] node_class, cnp.float32_t[:, ::1] features):
    """Route every row to a leaf; see _kernels_py.traverse."""
    cdef Py_ssize_t n = features.shape[0]
    cdef Py_ssize_t i
    cdef int node
    out_arr = np.empty(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] out = out_arr
    with nogil:
        for i in range(n):
            node = 0
            while node_feature[node] >= 0:
                if <double>features[i, node_feature[node]] <= node_threshold[node]:
                    node = node_left[node]
                else:
                    node = node_right[node]
            out[i] = <cnp.uint8_t>node_class[node]
    return out_arr
