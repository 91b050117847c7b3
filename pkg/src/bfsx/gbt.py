"""Gradient-boosted regression trees: depth-limited CART weak learners under
squared loss, with deterministic split tie-breaking and a depth grid search.

No subsampling and no stochastic elements: identical inputs always produce a
bit-identical model, which is what lets the subset scorer memoize safely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels

SERIALIZATION_VERSION = 1


@dataclass(frozen=True)
class GbtParams:
    """Boosting configuration.

    `seed` is reserved for future stochastic variants; the current model is
    fully deterministic and does not consume it.
    """

    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 1 <= self.max_depth <= 16:
            raise ValueError("max_depth must be in [1, 16]")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class TreeNode:
    """A regression-tree node: either an internal split or a leaf.

    Internal nodes route a sample to `left` iff x[feature_index] <= threshold.
    """

    feature_index: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float | None = None

    def __post_init__(self):
        if self.is_leaf:
            if self.value is None:
                raise ValueError("leaf node needs a value")
        elif None in (self.threshold, self.left, self.right):
            raise ValueError("internal node needs threshold and both children")

    @property
    def is_leaf(self) -> bool:
        return self.feature_index is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def n_leaves(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.n_leaves() + self.right.n_leaves()


@dataclass
class GbtModel:
    """An additive ensemble: base prediction plus shrunken tree outputs."""

    base_prediction: float
    trees: tuple[TreeNode, ...]
    params: GbtParams
    n_features: int
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    def predict(self, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        return predict(self, X, n_trees=n_trees)


def _validate_matrix(X: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("X must be a non-empty 2-d matrix")
    if target.shape != (X.shape[0],):
        raise ValueError("target length must match the number of rows")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(target)):
        raise ValueError("inputs must be finite")
    return X, target


def _max_nodes(max_depth: int, n_rows: int) -> int:
    # a tree has at most n_rows leaves, so 2*n_rows - 1 nodes; the depth cap
    # keeps shallow trees' arrays small and deep trees' arrays bounded
    return min(2 ** (max_depth + 1) - 1, 2 * n_rows - 1)


def fit_tree(
    X: np.ndarray,
    residuals: np.ndarray,
    max_depth: int,
    min_samples_leaf: int = 1,
) -> TreeNode:
    """Greedy top-down CART regression tree minimizing residual SSE.

    Split candidates are midpoints between consecutive distinct sorted values
    of each feature; a node stays a leaf when no split reduces the SSE or the
    depth/leaf-size constraints bind. Ties between equal-gain splits go to
    the lowest feature index, then the lowest threshold.
    """
    X, residuals = _validate_matrix(X, residuals)
    if X.shape[0] < 2 * min_samples_leaf:
        raise ValueError("need at least 2 * min_samples_leaf rows")
    order = _kernels.presort_columns(X)
    cap = _max_nodes(max_depth, X.shape[0])
    feat = np.empty(cap, dtype=np.int64)
    thresh = np.empty(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap)
    pos = np.empty(X.shape[0], dtype=np.int64)
    _kernels.grow_tree(
        X, order, residuals, max_depth, min_samples_leaf,
        feat, thresh, left, right, value, pos,
    )
    return _unpack_node(feat, thresh, left, right, value, 0)


def _unpack_node(feat, thresh, left, right, value, u) -> TreeNode:
    if feat[u] < 0:
        return TreeNode(value=float(value[u]))
    return TreeNode(
        feature_index=int(feat[u]),
        threshold=float(thresh[u]),
        left=_unpack_node(feat, thresh, left, right, value, left[u]),
        right=_unpack_node(feat, thresh, left, right, value, right[u]),
    )


def _pack_trees(trees: Sequence[TreeNode]) -> tuple:
    """Flatten nested trees into the array layout the kernels expect."""
    counts = [max(1, 2 * t.n_leaves() - 1) for t in trees] or [1]
    cap = max(counts)
    n = len(trees)
    feat = np.full((n, cap), -1, dtype=np.int64)
    thresh = np.zeros((n, cap))
    left = np.zeros((n, cap), dtype=np.int64)
    right = np.zeros((n, cap), dtype=np.int64)
    value = np.zeros((n, cap))

    def fill(t: int, node: TreeNode, u: int, next_free: int) -> int:
        if node.is_leaf:
            feat[t, u] = -1
            value[t, u] = node.value
            return next_free
        feat[t, u] = node.feature_index
        thresh[t, u] = node.threshold
        lid, rid = next_free, next_free + 1
        left[t, u] = lid
        right[t, u] = rid
        next_free = fill(t, node.left, lid, next_free + 2)
        return fill(t, node.right, rid, next_free)

    for t, tree in enumerate(trees):
        fill(t, tree, 0, 1)
    return feat, thresh, left, right, value


def _fit(X: np.ndarray, y: np.ndarray, params: GbtParams):
    """Fit and also return the incrementally tracked training predictions."""
    X, y = _validate_matrix(X, y)
    if X.shape[0] < 2 * params.min_samples_leaf:
        raise ValueError("need at least 2 * min_samples_leaf rows")
    order = _kernels.presort_columns(X)
    cap = _max_nodes(params.max_depth, X.shape[0])
    feat = np.empty((params.n_trees, cap), dtype=np.int64)
    thresh = np.empty((params.n_trees, cap))
    left = np.empty((params.n_trees, cap), dtype=np.int64)
    right = np.empty((params.n_trees, cap), dtype=np.int64)
    value = np.empty((params.n_trees, cap))
    n_nodes = np.empty(params.n_trees, dtype=np.int64)
    train_pred = _kernels.fit_forest(
        X, y, order, params.n_trees, params.max_depth,
        params.learning_rate, params.min_samples_leaf,
        feat, thresh, left, right, value, n_nodes,
    )
    trees = tuple(
        _unpack_node(feat[t], thresh[t], left[t], right[t], value[t], 0)
        for t in range(params.n_trees)
    )
    model = GbtModel(
        base_prediction=float(np.mean(y)),
        trees=trees,
        params=params,
        n_features=X.shape[1],
        _packed=(feat, thresh, left, right, value),
    )
    return model, train_pred


def fit_gbt(X: np.ndarray, y: np.ndarray, params: GbtParams) -> GbtModel:
    """Boost depth-limited trees on the running residuals of `y`."""
    model, _ = _fit(X, y, params)
    return model


def predict(model: GbtModel, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
    """Ensemble prediction; `n_trees` truncates to the first trees if given."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"X must have {model.n_features} columns, got shape {X.shape}"
        )
    if n_trees is None:
        n_trees = len(model.trees)
    if not 0 <= n_trees <= len(model.trees):
        raise ValueError("n_trees out of range")
    if model._packed is None:
        model._packed = _pack_trees(model.trees)
    feat, thresh, left, right, value = model._packed
    return _kernels.predict_forest(
        X, model.base_prediction, model.params.learning_rate,
        n_trees, feat, thresh, left, right, value,
    )


def grid_search_depth(
    X: np.ndarray,
    y: np.ndarray,
    depths: Sequence[int],
    cv,
    params: GbtParams,
):
    """Pick the tree depth maximizing mean cross-validated r^2 on (X, y).

    Returns (best_depth, best_score, scores_by_depth). Ties at identical
    scores go to the smaller depth.
    """
    from .scoring import cv_r2  # deferred: scoring depends on this module

    if len(depths) == 0:
        raise ValueError("depth grid must be non-empty")
    scores: dict[int, float] = {}
    for d in depths:
        scores[int(d)] = cv_r2(X, y, replace(params, max_depth=int(d)), cv)
    best_depth = min(
        scores, key=lambda d: (-scores[d], d)
    )
    return best_depth, scores[best_depth], scores


def model_to_json(model: GbtModel) -> str:
    """Versioned JSON document capturing params and full tree structure."""

    def node_dict(node: TreeNode):
        if node.is_leaf:
            return {"value": node.value}
        return {
            "feature_index": node.feature_index,
            "threshold": node.threshold,
            "left": node_dict(node.left),
            "right": node_dict(node.right),
        }

    doc = {
        "format_version": SERIALIZATION_VERSION,
        "base_prediction": model.base_prediction,
        "n_features": model.n_features,
        "params": {
            "n_trees": model.params.n_trees,
            "max_depth": model.params.max_depth,
            "learning_rate": model.params.learning_rate,
            "min_samples_leaf": model.params.min_samples_leaf,
            "seed": model.params.seed,
        },
        "trees": [node_dict(t) for t in model.trees],
    }
    return json.dumps(doc, indent=2)


def model_from_json(text: str) -> GbtModel:
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != SERIALIZATION_VERSION:
        raise ValueError(f"unsupported model format version: {version}")

    def parse(node) -> TreeNode:
        if "value" in node:
            return TreeNode(value=float(node["value"]))
        return TreeNode(
            feature_index=int(node["feature_index"]),
            threshold=float(node["threshold"]),
            left=parse(node["left"]),
            right=parse(node["right"]),
        )

    return GbtModel(
        base_prediction=float(doc["base_prediction"]),
        trees=tuple(parse(t) for t in doc["trees"]),
        params=GbtParams(**doc["params"]),
        n_features=int(doc["n_features"]),
    )


def training_mse_trace(model: GbtModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """MSE against `y` after 0, 1, ..., n_trees trees; non-increasing on the
    training data because every tree is fit to the current residuals."""
    y = np.asarray(y, dtype=np.float64)
    trace = np.empty(len(model.trees) + 1)
    for k in range(len(model.trees) + 1):
        trace[k] = float(np.mean((predict(model, X, n_trees=k) - y) ** 2))
    return trace
