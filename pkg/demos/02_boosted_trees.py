"""Fit the boosted-tree regressor, inspect its trees, round-trip to JSON.

The model is plain least-squares boosting over depth-limited CART trees:
every tree fits the residual of the running ensemble, scaled by the
learning rate. Everything is deterministic, so refitting reproduces the
model bit for bit.
"""

import numpy as np

from bfsx import GbtParams, fit_gbt, fit_tree, grid_search_depth, model_from_json, model_to_json, predict
from bfsx.gbt import training_mse_trace
from bfsx.scoring import CvParams

rng = np.random.default_rng(42)
X = rng.normal(size=(120, 4))
y = np.sin(X[:, 0]) + 0.5 * X[:, 2] + 0.1 * rng.normal(size=120)

params = GbtParams(n_trees=60, max_depth=3, learning_rate=0.1)
model = fit_gbt(X, y, params)
mse = training_mse_trace(model, X, y)
print(f"training MSE: start {mse[0]:.4f} -> after 10 trees {mse[10]:.4f} -> final {mse[-1]:.4f}")

stump = fit_tree(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), max_depth=1)
print(f"\na two-point stump splits feature {stump.feature_index} at {stump.threshold}")
print(f"  leaves predict {stump.left.value} and {stump.right.value}")

clone = model_from_json(model_to_json(model))
same = np.array_equal(predict(clone, X), predict(model, X))
print(f"\nJSON round-trip preserves predictions: {same}")

depth, score, scores = grid_search_depth(
    X, y, depths=[2, 3, 4, 5], cv=CvParams(k=5, repeats=1, seed=7), params=params
)
print("\ncross-validated depth search:")
for d, s in sorted(scores.items()):
    marker = " <- chosen" if d == depth else ""
    print(f"  depth {d}: r2 = {s:.4f}{marker}")
