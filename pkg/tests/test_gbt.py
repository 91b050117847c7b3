"""Boosted-tree model: CART induction, boosting, prediction, depth search."""

import numpy as np
import pytest

from bfsx.gbt import (
    GbtModel,
    GbtParams,
    TreeNode,
    fit_gbt,
    fit_tree,
    grid_search_depth,
    model_from_json,
    model_to_json,
    predict,
    training_mse_trace,
    _fit,
)
from bfsx.scoring import CvParams, cv_r2


def brute_force_best_sse(X, y, depth, min_leaf=1):
    """Minimum achievable training SSE over all depth-limited split trees.

    Enumerates every (feature, midpoint) split sequence recursively; the
    independent oracle for greedy CART on tiny datasets.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    def rec(rows, budget):
        sub = y[rows]
        best = float(np.sum((sub - sub.mean()) ** 2))
        if budget == 0 or len(rows) < 2 * min_leaf:
            return best
        for f in range(X.shape[1]):
            vals = np.unique(X[rows, f])
            for a, b in zip(vals, vals[1:]):
                t = 0.5 * (a + b)
                left = rows[X[rows, f] <= t]
                right = rows[X[rows, f] > t]
                if len(left) < min_leaf or len(right) < min_leaf:
                    continue
                best = min(best, rec(left, budget - 1) + rec(right, budget - 1))
        return best

    return rec(np.arange(len(y)), depth)


def tree_train_sse(tree, X, y):
    model = GbtModel(
        base_prediction=0.0,
        trees=(tree,),
        params=GbtParams(n_trees=1, max_depth=16, learning_rate=1.0),
        n_features=X.shape[1],
    )
    return float(np.sum((predict(model, np.asarray(X, dtype=float)) - y) ** 2))


def leaf_row_counts(tree, X):
    counts = {}
    for row in np.asarray(X, dtype=float):
        node = tree
        path = []
        while not node.is_leaf:
            go_left = row[node.feature_index] <= node.threshold
            path.append("L" if go_left else "R")
            node = node.left if go_left else node.right
        key = "".join(path)
        counts[key] = counts.get(key, 0) + 1
    return counts


class TestFitTree:
    def test_two_point_stump(self):
        tree = fit_tree(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), max_depth=1)
        assert not tree.is_leaf
        assert tree.feature_index == 0
        assert tree.threshold == pytest.approx(0.5)
        assert tree.left.value == pytest.approx(0.0)
        assert tree.right.value == pytest.approx(1.0)

    def test_constant_residuals_stay_a_leaf(self):
        X = np.arange(6.0).reshape(-1, 1)
        tree = fit_tree(X, np.full(6, 3.25), max_depth=4)
        assert tree.is_leaf
        assert tree.value == pytest.approx(3.25)

    def test_step_function_matches_brute_force(self):
        X = np.arange(8.0).reshape(-1, 1)
        y = np.array([1.0, 1.0, 5.0, 5.0, 2.0, 2.0, 8.0, 8.0])
        tree = fit_tree(X, y, max_depth=3)
        assert tree_train_sse(tree, X, y) == pytest.approx(
            brute_force_best_sse(X, y, 3), abs=1e-9
        )

    def test_greedy_never_beats_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            X = rng.normal(size=(8, 2))
            y = rng.normal(size=8)
            tree = fit_tree(X, y, max_depth=2)
            assert tree_train_sse(tree, X, y) >= brute_force_best_sse(X, y, 2) - 1e-9

    def test_depth_limit_respected(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(64, 3))
        y = rng.normal(size=64)
        for depth in (1, 2, 3):
            assert fit_tree(X, y, max_depth=depth).depth() <= depth

    def test_min_samples_leaf_respected(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        tree = fit_tree(X, y, max_depth=4, min_samples_leaf=5)
        assert all(c >= 5 for c in leaf_row_counts(tree, X).values())

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError):
            fit_tree(np.empty((0, 1)), np.empty(0), max_depth=2)

    def test_exact_fit_on_distinct_linear_points(self):
        # depth-d capacity 2^d: with linear targets the SSE-optimal splits
        # are balanced, so every point ends up alone in a leaf
        X = np.arange(8.0).reshape(-1, 1)
        y = 2.0 * np.arange(8.0) - 3.0
        tree = fit_tree(X, y, max_depth=3)
        assert tree_train_sse(tree, X, y) == pytest.approx(0.0, abs=1e-18)


class TestFitGbt:
    def test_constant_target(self):
        X = np.arange(10.0).reshape(-1, 1)
        model = fit_gbt(X, np.full(10, 2.5), GbtParams(n_trees=5, max_depth=2))
        assert model.base_prediction == pytest.approx(2.5)
        assert np.allclose(predict(model, X), 2.5)
        assert all(t.is_leaf and t.value == 0.0 for t in model.trees)

    def test_linear_target_driven_to_zero(self):
        X = np.arange(16.0).reshape(-1, 1)
        y = np.arange(16.0)
        model = fit_gbt(X, y, GbtParams(n_trees=50, max_depth=4, learning_rate=1.0))
        assert float(np.mean((predict(model, X) - y) ** 2)) < 1e-6

    def test_training_mse_trace_non_increasing(self):
        rng = np.random.default_rng(11)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(40, 4))
            y = rng.normal(size=40)
            model = fit_gbt(X, y, GbtParams(n_trees=30, max_depth=3, learning_rate=0.3))
            trace = training_mse_trace(model, X, y)
            assert np.all(np.diff(trace) <= 1e-12)

    def test_non_finite_target_rejected(self):
        X = np.arange(4.0).reshape(-1, 1)
        with pytest.raises(ValueError):
            fit_gbt(X, np.array([0.0, 1.0, np.nan, 2.0]), GbtParams(n_trees=2))

    def test_determinism_node_by_node(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(60, 5))
        y = rng.normal(size=60)
        params = GbtParams(n_trees=20, max_depth=3, learning_rate=0.2)
        a = fit_gbt(X, y, params)
        b = fit_gbt(X, y, params)
        assert a.base_prediction == b.base_prediction
        assert a.trees == b.trees  # recursive dataclass equality


class TestPredict:
    def test_empty_tree_list_predicts_base(self):
        model = GbtModel(
            base_prediction=1.75,
            trees=(),
            params=GbtParams(n_trees=1),
            n_features=3,
        )
        out = predict(model, np.zeros((4, 3)))
        assert np.allclose(out, 1.75)

    def test_single_stump_with_unit_rate(self):
        stump = fit_tree(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), max_depth=1)
        model = GbtModel(
            base_prediction=0.0,
            trees=(stump,),
            params=GbtParams(n_trees=1, learning_rate=1.0),
            n_features=1,
        )
        assert predict(model, np.array([[0.0], [1.0]])) == pytest.approx([0.0, 1.0])

    def test_matches_incremental_training_prediction(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        model, train_pred = _fit(X, y, GbtParams(n_trees=25, max_depth=3, learning_rate=0.4))
        assert np.allclose(predict(model, X), train_pred, atol=1e-12, rtol=0.0)

    def test_row_order_invariance(self):
        rng = np.random.default_rng(19)
        X = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        model = fit_gbt(X, y, GbtParams(n_trees=10, max_depth=2))
        perm = rng.permutation(30)
        assert np.array_equal(predict(model, X[perm]), predict(model, X)[perm])

    def test_column_mismatch_rejected(self):
        model = fit_gbt(np.zeros((4, 2)), np.arange(4.0), GbtParams(n_trees=1))
        with pytest.raises(ValueError):
            predict(model, np.zeros((4, 3)))


class TestGridSearchDepth:
    def test_singleton_grid(self):
        rng = np.random.default_rng(23)
        X = rng.normal(size=(30, 2))
        y = X[:, 0] + 0.1 * rng.normal(size=30)
        depth, score, scores = grid_search_depth(
            X, y, [3], CvParams(k=3, repeats=1, seed=5), GbtParams(n_trees=10)
        )
        assert depth == 3
        assert scores == {3: score}

    def test_argmax_consistency_on_linear_target(self):
        rng = np.random.default_rng(29)
        X = rng.normal(size=(60, 4))
        y = 1.3 * X[:, 1] - 0.7 * X[:, 3] + 0.05 * rng.normal(size=60)
        cv = CvParams(k=4, repeats=2, seed=9)
        params = GbtParams(n_trees=25, learning_rate=0.3)
        depth, score, scores = grid_search_depth(X, y, [2, 3, 4, 5], cv, params)
        # independently recompute each depth's CV score
        for d in (2, 3, 4, 5):
            expected = cv_r2(
                X, y, GbtParams(n_trees=25, learning_rate=0.3, max_depth=d), cv
            )
            assert np.isfinite(scores[d])
            assert scores[d] == expected
        assert score == max(scores.values())
        assert depth == min(d for d in scores if scores[d] == score)

    def test_tie_prefers_smaller_depth(self):
        # four distinct x values: a depth-2 tree already isolates every group,
        # so deeper trees predict identically and the scores tie exactly
        x = np.tile(np.arange(4.0), 10)
        X = x.reshape(-1, 1)
        y = 3.0 * x
        depth, _, scores = grid_search_depth(
            X, y, [2, 3, 4], CvParams(k=4, repeats=1, seed=1), GbtParams(n_trees=5, learning_rate=1.0)
        )
        assert scores[2] == scores[3] == scores[4]
        assert depth == 2

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            grid_search_depth(
                np.zeros((4, 1)), np.arange(4.0), [], CvParams(k=2), GbtParams()
            )


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(31)
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        model = fit_gbt(X, y, GbtParams(n_trees=8, max_depth=3, learning_rate=0.25))
        clone = model_from_json(model_to_json(model))
        assert clone.base_prediction == model.base_prediction
        assert clone.trees == model.trees
        assert clone.params == model.params
        assert np.array_equal(predict(clone, X), predict(model, X))

    def test_version_checked(self):
        doc = model_to_json(
            fit_gbt(np.zeros((4, 1)), np.arange(4.0), GbtParams(n_trees=1))
        ).replace('"format_version": 1', '"format_version": 99')
        with pytest.raises(ValueError):
            model_from_json(doc)


class TestTreeNodeValidation:
    def test_leaf_needs_value(self):
        with pytest.raises(ValueError):
            TreeNode()

    def test_internal_needs_children(self):
        with pytest.raises(ValueError):
            TreeNode(feature_index=0, threshold=0.5, left=TreeNode(value=1.0))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            GbtParams(n_trees=0)
        with pytest.raises(ValueError):
            GbtParams(max_depth=0)
        with pytest.raises(ValueError):
            GbtParams(learning_rate=0.0)
        with pytest.raises(ValueError):
            GbtParams(learning_rate=1.5)
