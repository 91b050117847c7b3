"""Feature-subset vertices, one-bit adjacency, and the score calculus on edges.

The search space is the lattice of all 2^M feature subsets. A subset is a
fixed-width bit vector; two subsets are adjacent when they differ in exactly
one bit. Edge weights are score differences, so any path's length telescopes
to the score difference of its endpoints.
"""

from __future__ import annotations

import math
import operator
from typing import Iterable, Sequence

MAX_FEATURES = 4096


class FeatureSubset:
    """Immutable fixed-width bit vector over M features.

    Bit i set means feature i is selected. Instances are hashable and compare
    equal iff both the width and all bits match, so they can key score caches
    and open/closed-set membership tests. The canonical text rendering is a
    string of '0'/'1' characters with bit 0 first, e.g. ``{0, 2}`` over four
    features renders as ``"1010"``.
    """

    __slots__ = ("_mask", "_m")

    def __init__(self, mask: int, n_features: int):
        mask = operator.index(mask)
        n_features = operator.index(n_features)
        if not 1 <= n_features <= MAX_FEATURES:
            raise ValueError(
                f"feature count must be in [1, {MAX_FEATURES}], got {n_features}"
            )
        if not 0 <= mask < (1 << n_features):
            raise ValueError(f"mask {mask:#x} does not fit in {n_features} bits")
        self._mask = mask
        self._m = n_features

    @classmethod
    def empty(cls, n_features: int) -> "FeatureSubset":
        return cls(0, n_features)

    @classmethod
    def full(cls, n_features: int) -> "FeatureSubset":
        return cls((1 << n_features) - 1, n_features)

    @classmethod
    def from_indices(cls, indices: Iterable[int], n_features: int) -> "FeatureSubset":
        mask = 0
        for i in indices:
            i = operator.index(i)  # plain int; numpy ints would overflow <<
            if not 0 <= i < n_features:
                raise ValueError(
                    f"feature index {i} out of range for {n_features} features"
                )
            mask |= 1 << i
        return cls(mask, n_features)

    @classmethod
    def from_bits(cls, bits: str | Sequence[bool]) -> "FeatureSubset":
        """Parse the canonical rendering (bit 0 first)."""
        if isinstance(bits, str):
            if set(bits) - {"0", "1"}:
                raise ValueError(f"bit string may only contain 0/1: {bits!r}")
            flags = [c == "1" for c in bits]
        else:
            flags = [bool(b) for b in bits]
        return cls.from_indices((i for i, b in enumerate(flags) if b), len(flags))

    @property
    def n_features(self) -> int:
        return self._m

    @property
    def mask(self) -> int:
        return self._mask

    def popcount(self) -> int:
        """Number of selected features."""
        return self._mask.bit_count()

    def indices(self) -> tuple[int, ...]:
        """Selected feature indices, ascending."""
        return tuple(i for i in range(self._m) if self._mask >> i & 1)

    def contains(self, index: int) -> bool:
        index = operator.index(index)
        if not 0 <= index < self._m:
            raise ValueError(f"feature index {index} out of range")
        return bool(self._mask >> index & 1)

    def with_flipped(self, index: int) -> "FeatureSubset":
        index = operator.index(index)
        if not 0 <= index < self._m:
            raise ValueError(f"feature index {index} out of range")
        return FeatureSubset(self._mask ^ (1 << index), self._m)

    def bits(self) -> str:
        """Canonical rendering: '0'/'1' characters, bit 0 first."""
        return "".join("1" if self._mask >> i & 1 else "0" for i in range(self._m))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSubset):
            return NotImplemented
        return self._m == other._m and self._mask == other._mask

    def __hash__(self) -> int:
        return hash((self._m, self._mask))

    def __str__(self) -> str:
        return self.bits()

    def __repr__(self) -> str:
        return f"FeatureSubset({self.bits()!r})"


def make_subset(indices: Iterable[int], n_features: int) -> FeatureSubset:
    """Build the subset selecting exactly `indices` out of `n_features`."""
    return FeatureSubset.from_indices(indices, n_features)


class LatticeEdge:
    """A directed lattice edge between adjacent subsets, weighted by the
    score difference of its endpoints."""

    __slots__ = ("origin", "destination", "weight")

    def __init__(
        self,
        origin: FeatureSubset,
        destination: FeatureSubset,
        score_from: float,
        score_to: float,
    ):
        if hamming(origin, destination) != 1:
            raise ValueError("lattice edges connect subsets exactly one bit apart")
        self.origin = origin
        self.destination = destination
        self.weight = edge_weight(score_from, score_to)

    def __repr__(self) -> str:
        return (
            f"LatticeEdge({self.origin.bits()} -> {self.destination.bits()}, "
            f"weight={self.weight!r})"
        )


def _check_same_width(a: FeatureSubset, b: FeatureSubset) -> None:
    if a.n_features != b.n_features:
        raise ValueError(
            f"subsets have different widths: {a.n_features} vs {b.n_features}"
        )


def hamming(a: FeatureSubset, b: FeatureSubset) -> int:
    """Number of differing bits."""
    _check_same_width(a, b)
    return (a.mask ^ b.mask).bit_count()


def neighbors(node: FeatureSubset) -> list[FeatureSubset]:
    """All M subsets at Hamming distance 1, ordered by flipped-bit index."""
    m = node.n_features
    return [FeatureSubset(node.mask ^ (1 << i), m) for i in range(m)]


def crossover(
    parent: FeatureSubset, child1: FeatureSubset, child2: FeatureSubset
) -> FeatureSubset:
    """Combine two distinct children of `parent` by per-bit child1+child2-parent.

    Both children must sit at Hamming distance 1 from the parent. The result
    then differs from the parent exactly at the two bits where the children
    differ from it: merging two added features, swapping an added feature for
    a removed one, or dropping one feature from each child. Any input for
    which the per-bit arithmetic would leave {0, 1}, or that violates the
    distance-1/distinctness preconditions, is rejected.
    """
    _check_same_width(parent, child1)
    _check_same_width(parent, child2)
    m = parent.n_features
    width = (1 << m) - 1
    p, a, b = parent.mask, child1.mask, child2.mask
    overflow = a & b & (width & ~p)  # 1 + 1 - 0 = 2
    underflow = (width & ~(a | b)) & p  # 0 + 0 - 1 = -1
    if overflow or underflow:
        raise ValueError(
            "crossover arithmetic leaves {0,1}: children are not both "
            "distance-1 modifications of the parent"
        )
    if hamming(parent, child1) != 1 or hamming(parent, child2) != 1:
        raise ValueError("crossover children must be at Hamming distance 1 from parent")
    if child1 == child2:
        raise ValueError("crossover children must be distinct")
    # With the checks above, per-bit c1 + c2 - p equals c1 XOR c2 XOR p.
    return FeatureSubset(a ^ b ^ p, m)


def edge_weight(score_from: float, score_to: float) -> float:
    """Weight of a lattice edge: destination score minus source score."""
    if not (math.isfinite(score_from) and math.isfinite(score_to)):
        raise ValueError("edge weight requires finite scores")
    return score_to - score_from


def path_length(scores: Sequence[float]) -> float:
    """Sum of edge weights along a path given the vertex scores in order.

    Telescopes to last minus first, which is what makes searching for the
    longest path from the empty subset equivalent to searching for the
    best-scoring vertex.
    """
    if len(scores) < 2:
        raise ValueError("a path needs at least two vertices")
    return sum(
        edge_weight(scores[i], scores[i + 1]) for i in range(len(scores) - 1)
    )
