"""Numba kernels for CART growth and forest prediction.

Trees are stored as flat arrays indexed by node id: `feat[u] < 0` marks a
leaf with prediction `value[u]`; internal nodes route a row left iff
`x[feat[u]] <= thresh[u]`. Growth is level-by-level with columns presorted
once per fit, so the per-tree cost is O(depth * n_rows * n_cols).

All loops run in a fixed order (features ascending, presorted rows
ascending), which makes fitted trees and predictions bit-reproducible.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Strictly positive SSE reduction required to split; absorbs float noise on
# mathematically constant nodes.
MIN_GAIN = 1e-12


@njit(cache=True, nogil=True)
def grow_tree(X, order, target, max_depth, min_leaf, feat, thresh, left, right, value, pos):
    """Fit one SSE-minimizing tree to `target`; returns the node count.

    `order` holds per-column presorted row indices (shape m x n). `pos` is an
    n-vector scratch array; on return it holds each row's leaf id.
    """
    n, m = X.shape
    max_nodes = feat.shape[0]

    node_cnt = np.zeros(max_nodes, dtype=np.int64)
    node_sum = np.zeros(max_nodes)
    node_act = np.zeros(max_nodes, dtype=np.uint8)
    best_gain = np.empty(max_nodes)
    best_f = np.empty(max_nodes, dtype=np.int64)
    best_t = np.empty(max_nodes)
    scan_cnt = np.empty(max_nodes, dtype=np.int64)
    scan_sum = np.empty(max_nodes)
    scan_prev = np.empty(max_nodes)

    pos[:] = 0
    node_cnt[0] = n
    s0 = 0.0
    for i in range(n):
        s0 += target[i]
    node_sum[0] = s0

    n_nodes = 1
    level_start = 0
    level_stop = 1
    for _depth in range(max_depth):
        any_active = False
        for u in range(level_start, level_stop):
            best_gain[u] = MIN_GAIN
            best_f[u] = -1
            if node_cnt[u] >= 2 * min_leaf:
                node_act[u] = 1
                any_active = True
            else:
                node_act[u] = 0
        if not any_active:
            break
        # One pass per feature over the presorted rows evaluates every
        # candidate split of every active node at this level. Iterating
        # features ascending and thresholds ascending with a strict gain
        # comparison yields the lowest-feature, lowest-threshold tie-break.
        for f in range(m):
            for u in range(level_start, level_stop):
                scan_cnt[u] = 0
                scan_sum[u] = 0.0
            for j in range(n):
                row = order[f, j]
                u = pos[row]
                if u < level_start or node_act[u] == 0:
                    continue
                v = X[row, f]
                c = scan_cnt[u]
                if c > 0 and scan_prev[u] < v:
                    nl = c
                    nr = node_cnt[u] - nl
                    if nl >= min_leaf and nr >= min_leaf:
                        ls = scan_sum[u]
                        rs = node_sum[u] - ls
                        gain = (
                            ls * ls / nl
                            + rs * rs / nr
                            - node_sum[u] * node_sum[u] / node_cnt[u]
                        )
                        if gain > best_gain[u]:
                            best_gain[u] = gain
                            best_f[u] = f
                            best_t[u] = 0.5 * (scan_prev[u] + v)
                scan_cnt[u] = c + 1
                scan_sum[u] += target[row]
                scan_prev[u] = v
        n_before = n_nodes
        for u in range(level_start, level_stop):
            if best_f[u] >= 0:
                feat[u] = best_f[u]
                thresh[u] = best_t[u]
                left[u] = n_nodes
                right[u] = n_nodes + 1
                n_nodes += 2
            else:
                feat[u] = -1
        if n_nodes == n_before:
            level_start = level_stop
            break
        for i in range(n):
            u = pos[i]
            if u >= level_start and best_f[u] >= 0:
                if X[i, feat[u]] <= thresh[u]:
                    child = left[u]
                else:
                    child = right[u]
                pos[i] = child
                node_cnt[child] += 1
                node_sum[child] += target[i]
        level_start = level_stop
        level_stop = n_nodes

    # Nodes of the last (unprocessed) level become leaves.
    for u in range(level_start, level_stop):
        feat[u] = -1
    for u in range(n_nodes):
        value[u] = 0.0
        if feat[u] < 0 and node_cnt[u] > 0:
            value[u] = node_sum[u] / node_cnt[u]
    return n_nodes


@njit(cache=True, nogil=True)
def fit_forest(X, y, order, n_trees, max_depth, lr, min_leaf,
               feat, thresh, left, right, value, n_nodes):
    """Least-squares boosting: each tree fits the residual of the ensemble.

    Tree arrays are 2-d (tree index, node id). Returns the incremental
    training predictions after the final tree.
    """
    n = X.shape[0]
    pred = np.full(n, _mean(y))
    resid = np.empty(n)
    pos = np.empty(n, dtype=np.int64)
    for t in range(n_trees):
        for i in range(n):
            resid[i] = y[i] - pred[i]
        n_nodes[t] = grow_tree(
            X, order, resid, max_depth, min_leaf,
            feat[t], thresh[t], left[t], right[t], value[t], pos,
        )
        for i in range(n):
            pred[i] += lr * value[t, pos[i]]
    return pred


@njit(cache=True, nogil=True)
def _mean(y):
    s = 0.0
    for i in range(y.shape[0]):
        s += y[i]
    return s / y.shape[0]


@njit(cache=True, nogil=True)
def predict_forest(X, base, lr, n_trees, feat, thresh, left, right, value):
    """base + lr * sum of tree outputs, walking each packed tree per row."""
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            u = 0
            while feat[t, u] >= 0:
                if X[i, feat[t, u]] <= thresh[t, u]:
                    u = left[t, u]
                else:
                    u = right[t, u]
            acc += value[t, u]
        out[i] = base + lr * acc
    return out


def presort_columns(X: np.ndarray) -> np.ndarray:
    """Per-column stable argsort, shape (n_cols, n_rows); reused by every tree."""
    n, m = X.shape
    order = np.empty((m, n), dtype=np.int64)
    for f in range(m):
        order[f] = np.argsort(X[:, f], kind="stable")
    return order
