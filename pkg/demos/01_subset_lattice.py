"""Tour of the feature-subset lattice: vertices, neighbors, crossover jumps.

Every subset of M features is a bit vector; subsets one bit apart are
adjacent. Because edge weights are score differences, the length of any
path telescopes, so hunting for the longest path from the empty subset is
the same problem as hunting for the best-scoring vertex.
"""

import numpy as np

from bfsx import FeatureSubset, crossover, edge_weight, hamming, make_subset, neighbors, path_length

subset = make_subset({0, 2}, n_features=4)
print(f"{{0, 2}} over 4 features renders as {subset} (bit 0 first)")
print(f"selected indices: {subset.indices()}, size {subset.popcount()}")

print("\nneighbors differ in exactly one bit:")
for other in neighbors(subset):
    print(f"  {other}  (hamming distance {hamming(subset, other)})")

print("\ncrossover combines the two best children of a shared parent:")
parent = FeatureSubset.from_bits("0000")
child1 = FeatureSubset.from_bits("1000")
child2 = FeatureSubset.from_bits("0100")
jump = crossover(parent, child1, child2)
print(f"  parent {parent} + children {child1}, {child2} -> {jump}")
print(f"  the jump lands two bits from the parent: {hamming(parent, jump)}")

replace = crossover(
    FeatureSubset.from_bits("1000"),
    FeatureSubset.from_bits("1100"),
    FeatureSubset.from_bits("0000"),
)
print(f"  add+remove children swap a feature: 1000 -> {replace}")

print("\npath lengths telescope to last minus first:")
rng = np.random.default_rng(0)
scores = rng.uniform(0, 1, size=6)
total = path_length(scores)
print(f"  scores along a path: {np.round(scores, 3)}")
print(f"  sum of edge weights: {total:.6f}")
print(f"  last - first:        {scores[-1] - scores[0]:.6f}")
print(f"  single edge weight 0.40 -> 0.55: {edge_weight(0.40, 0.55):.2f}")
