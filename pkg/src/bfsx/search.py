"""Subset-search strategies over the feature lattice.

All strategies consume a `SubsetScorer` and emit a `SearchReport`. Node
ordering everywhere is (score desc, popcount asc, bit-string asc): among
equally scoring subsets the smaller, lexicographically earlier one wins,
which makes every strategy reproducible bit-for-bit.

When the scorer's evaluation budget runs out mid-search, the strategy stops
and reports its best-so-far with status ``"budget_exhausted"``.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import FeatureSubset, crossover, hamming, neighbors
from .scoring import EvaluationBudgetError, ScoredNode, SubsetScorer

EXHAUSTIVE_MAX_FEATURES = 20

STATUS_OK = "ok"
STATUS_BUDGET = "budget_exhausted"


def node_key(node: ScoredNode) -> tuple:
    """Priority key: higher score first, then smaller subset, then bit order."""
    return (-node.score, node.subset.popcount(), node.subset.bits())


class PriorityQueue:
    """Max-queue of scored nodes with exact membership and removal by subset."""

    def __init__(self):
        self._heap: list[list] = []
        self._entries: dict[FeatureSubset, list] = {}

    def push(self, node: ScoredNode) -> None:
        if node.subset in self._entries:
            raise ValueError(f"subset already queued: {node.subset}")
        entry = [node_key(node), node, True]
        self._entries[node.subset] = entry
        heapq.heappush(self._heap, entry)

    def _drop_dead(self) -> None:
        while self._heap and not self._heap[0][2]:
            heapq.heappop(self._heap)

    def popmax(self) -> ScoredNode:
        self._drop_dead()
        if not self._heap:
            raise IndexError("popmax from an empty queue")
        entry = heapq.heappop(self._heap)
        del self._entries[entry[1].subset]
        return entry[1]

    def peekmax(self) -> ScoredNode | None:
        self._drop_dead()
        return self._heap[0][1] if self._heap else None

    def remove(self, subset: FeatureSubset) -> None:
        entry = self._entries.pop(subset)
        entry[2] = False

    def __contains__(self, subset: FeatureSubset) -> bool:
        return subset in self._entries

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class TraceEntry:
    """One expansion: the node just visited and the best score so far."""

    index: int
    subset: FeatureSubset
    score: float
    best_score: float


@dataclass
class SearchReport:
    """Everything a strategy run produced, ready for comparison tables."""

    strategy: str
    best: ScoredNode
    trace: list[TraceEntry]
    evaluations: int
    model_fits: int
    wall_time: float
    config: dict
    status: str = STATUS_OK
    extras: dict = field(default_factory=dict)

    def to_json_dict(self, include_wall_time: bool = False) -> dict:
        """JSON form; wall time is excluded by default so artifacts from
        reruns with the same seed hash identically."""
        doc = {
            "strategy": self.strategy,
            "status": self.status,
            "best": {
                "subset": self.best.subset.bits(),
                "score": self.best.score,
                "size": self.best.subset.popcount(),
            },
            "evaluations": self.evaluations,
            "model_fits": self.model_fits,
            "config": self.config,
            "extras": self.extras,
            "trace": [
                {
                    "index": t.index,
                    "subset": t.subset.bits(),
                    "score": t.score,
                    "best_score": t.best_score,
                }
                for t in self.trace
            ],
        }
        if include_wall_time:
            doc["wall_time"] = self.wall_time
        return doc

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    def write_trace_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "subset", "score", "best_score"])
            for t in self.trace:
                writer.writerow([t.index, t.subset.bits(), repr(t.score), repr(t.best_score)])


@dataclass(frozen=True)
class GaParams:
    """Genetic-algorithm configuration; `mutation_rate=None` means 1/M per bit."""

    population_size: int = 50
    generations: int = 40
    mutation_rate: float | None = None
    tournament_size: int = 3
    elitism: int = 2
    crossover: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must be in [0, population_size)")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.crossover not in ("uniform", "none"):
            raise ValueError("crossover must be 'uniform' or 'none'")


def _json_safe_patience(patience: float) -> float | None:
    return patience if math.isfinite(patience) else None


def _finish(
    strategy: str,
    best: ScoredNode,
    trace: list[TraceEntry],
    scorer: SubsetScorer,
    counters0: tuple[int, int],
    t0: float,
    config: dict,
    status: str,
    extras: dict | None = None,
) -> SearchReport:
    evals0, fits0 = counters0
    return SearchReport(
        strategy=strategy,
        best=best,
        trace=trace,
        evaluations=scorer.evaluations - evals0,
        model_fits=scorer.model_fits - fits0,
        wall_time=time.perf_counter() - t0,
        config=config,
        status=status,
        extras=extras or {},
    )


def greedy_forward(dataset, scorer: SubsetScorer, max_no_improve: int = 1) -> SearchReport:
    """Classic sequential forward selection starting from the empty subset.

    Each step scores every single-feature addition and moves to the best
    child (even a non-improving one); the walk stops after `max_no_improve`
    consecutive steps without improving the best score, or at the full set.
    """
    return _greedy_sequential(dataset, scorer, max_no_improve, forward=True)


def greedy_backward(dataset, scorer: SubsetScorer, max_no_improve: int = 1) -> SearchReport:
    """Sequential backward elimination starting from the full feature set."""
    return _greedy_sequential(dataset, scorer, max_no_improve, forward=False)


def _greedy_sequential(dataset, scorer, max_no_improve, forward: bool) -> SearchReport:
    if max_no_improve < 1:
        raise ValueError("max_no_improve must be >= 1")
    m = scorer.n_features
    name = "greedy_forward" if forward else "greedy_backward"
    config = {"max_no_improve": max_no_improve}
    t0 = time.perf_counter()
    counters0 = (scorer.evaluations, scorer.model_fits)
    start = FeatureSubset.empty(m) if forward else FeatureSubset.full(m)
    current = scorer.score(start)
    best = current
    trace = [TraceEntry(0, current.subset, current.score, best.score)]
    status = STATUS_OK
    fails = 0
    step = 0
    try:
        while True:
            if forward:
                if current.subset.popcount() == m:
                    break
                moves = [
                    current.subset.with_flipped(i)
                    for i in range(m)
                    if not current.subset.contains(i)
                ]
            else:
                if current.subset.popcount() == 0:
                    break
                moves = [
                    current.subset.with_flipped(i)
                    for i in range(m)
                    if current.subset.contains(i)
                ]
            nodes = scorer.score_batch(moves)
            current = min(nodes, key=node_key)
            step += 1
            if current.score > best.score:
                best = current
                fails = 0
            else:
                fails += 1
            trace.append(TraceEntry(step, current.subset, current.score, best.score))
            if fails >= max_no_improve:
                break
    except EvaluationBudgetError:
        status = STATUS_BUDGET
    return _finish(name, best, trace, scorer, counters0, t0, config, status)


def greedy_bfs(dataset, scorer: SubsetScorer, patience: float = 25) -> SearchReport:
    """Greedy best-first search over the subset lattice.

    The open queue starts at the empty subset; each iteration pops the
    highest-priority node, counts it against `patience` unless it improves
    the best score, and enqueues its unvisited neighbors. With infinite
    patience this visits the whole lattice and equals exhaustive search.
    """
    return _best_first(dataset, scorer, patience, use_crossover=False)


def bfs_crossover(dataset, scorer: SubsetScorer, patience: float = 25) -> SearchReport:
    """Greedy best-first search plus a crossover jump per expansion.

    After expanding a node, its two best fresh children are combined by the
    per-bit child1+child2-parent operator and the resulting distance-2 node
    joins the open queue with the same priority rules. A pending crossover
    node is taken as the next current node when it outscores the queue's top
    candidate.
    """
    return _best_first(dataset, scorer, patience, use_crossover=True)


def _best_first(dataset, scorer, patience, use_crossover: bool) -> SearchReport:
    if not patience >= 1:
        raise ValueError("patience must be >= 1 (math.inf for exhaustive behavior)")
    m = scorer.n_features
    name = "bfs_crossover" if use_crossover else "greedy_bfs"
    config = {"patience": _json_safe_patience(patience)}
    t0 = time.perf_counter()
    counters0 = (scorer.evaluations, scorer.model_fits)

    start_node = scorer.score(FeatureSubset.empty(m))
    open_q = PriorityQueue()
    open_q.push(start_node)
    closed: set[FeatureSubset] = set()
    best = start_node
    pending: ScoredNode | None = None
    crossovers = 0
    fails = 0
    expansions = 0
    trace: list[TraceEntry] = []
    status = STATUS_OK

    try:
        while len(open_q):
            # The pending crossover node already sits in the open queue; it is
            # preferred outright only when it strictly outscores the node the
            # queue would otherwise yield.
            top = open_q.peekmax()
            if (
                pending is not None
                and pending.subset in open_q
                and pending.score > top.score
            ):
                current = pending
                open_q.remove(pending.subset)
            else:
                current = open_q.popmax()
            closed.add(current.subset)
            expansions += 1
            if current.score > best.score:
                best = current
                fails = 0
            else:
                fails += 1
            trace.append(TraceEntry(expansions, current.subset, current.score, best.score))
            if fails > patience:
                break

            children = [
                c
                for c in neighbors(current.subset)
                if c not in open_q and c not in closed
            ]
            child_nodes = scorer.score_batch(children)
            for node in child_nodes:
                open_q.push(node)

            if not use_crossover:
                continue
            if len(child_nodes) >= 2:
                first, second = sorted(child_nodes, key=node_key)[:2]
                cross_subset = crossover(current.subset, first.subset, second.subset)
                assert hamming(current.subset, cross_subset) == 2
                if cross_subset not in open_q and cross_subset not in closed:
                    pending = scorer.score(cross_subset)
                    open_q.push(pending)
                    crossovers += 1
                else:
                    pending = None
            else:
                pending = None
    except EvaluationBudgetError:
        status = STATUS_BUDGET

    extras = {"crossovers_enqueued": crossovers} if use_crossover else {}
    return _finish(name, best, trace, scorer, counters0, t0, config, status, extras)


def genetic(
    dataset,
    scorer: SubsetScorer,
    ga: GaParams | None = None,
    initial_population: list[FeatureSubset] | None = None,
) -> SearchReport:
    """Bit-string genetic algorithm: tournament selection, uniform crossover,
    per-bit mutation, elitism; fitness is the cached subset score.

    The starting population is Bernoulli(1/2) per bit unless
    `initial_population` provides exactly `population_size` subsets.
    """
    if ga is None:
        ga = GaParams()
    m = scorer.n_features
    mutation_rate = ga.mutation_rate if ga.mutation_rate is not None else 1.0 / m
    config = {
        "population_size": ga.population_size,
        "generations": ga.generations,
        "mutation_rate": mutation_rate,
        "tournament_size": ga.tournament_size,
        "elitism": ga.elitism,
        "crossover": ga.crossover,
        "seed": ga.seed,
    }
    t0 = time.perf_counter()
    counters0 = (scorer.evaluations, scorer.model_fits)
    rng = np.random.default_rng(np.random.SeedSequence(ga.seed))

    if initial_population is not None:
        if len(initial_population) != ga.population_size:
            raise ValueError("initial_population size must equal population_size")
        population = np.array(
            [[s.contains(i) for i in range(m)] for s in initial_population]
        )
    else:
        population = rng.random((ga.population_size, m)) < 0.5
    trace: list[TraceEntry] = []
    status = STATUS_OK
    best: ScoredNode | None = None

    def evaluate(pop: np.ndarray) -> list[ScoredNode]:
        subsets = [FeatureSubset.from_bits(row) for row in pop]
        return scorer.score_batch(subsets)

    def tournament(nodes: list[ScoredNode]) -> int:
        contenders = rng.integers(0, ga.population_size, size=ga.tournament_size)
        return min(contenders, key=lambda i: node_key(nodes[i]))

    try:
        nodes = evaluate(population)
        gen_best = min(nodes, key=node_key)
        best = gen_best
        trace.append(TraceEntry(0, gen_best.subset, gen_best.score, best.score))
        for gen in range(1, ga.generations + 1):
            order = sorted(range(ga.population_size), key=lambda i: node_key(nodes[i]))
            next_pop = np.empty_like(population)
            for slot, idx in enumerate(order[: ga.elitism]):
                next_pop[slot] = population[idx]
            filled = ga.elitism
            while filled < ga.population_size:
                p1 = population[tournament(nodes)]
                p2 = population[tournament(nodes)]
                if ga.crossover == "uniform":
                    take = rng.random(m) < 0.5
                    child = np.where(take, p1, p2)
                else:
                    child = p1.copy()
                flips = rng.random(m) < mutation_rate
                child = child ^ flips
                next_pop[filled] = child
                filled += 1
            population = next_pop
            nodes = evaluate(population)
            gen_best = min(nodes, key=node_key)
            if gen_best.score > best.score:
                best = gen_best
            trace.append(TraceEntry(gen, gen_best.subset, gen_best.score, best.score))
    except EvaluationBudgetError:
        status = STATUS_BUDGET
        if best is None:
            raise
    return _finish("genetic", best, trace, scorer, counters0, t0, config, status)


def exhaustive(dataset, scorer: SubsetScorer) -> SearchReport:
    """Score all 2^M subsets; the oracle for small M.

    Ties are broken exactly like the priority queue: smaller subsets first,
    then bit-string order.
    """
    m = scorer.n_features
    if m > EXHAUSTIVE_MAX_FEATURES:
        raise EvaluationBudgetError(
            f"exhaustive search refused for M={m} > {EXHAUSTIVE_MAX_FEATURES}"
        )
    config = {}
    t0 = time.perf_counter()
    counters0 = (scorer.evaluations, scorer.model_fits)
    best: ScoredNode | None = None
    trace: list[TraceEntry] = []
    status = STATUS_OK
    index = 0
    batch = 1 << 10
    try:
        for lo in range(0, 1 << m, batch):
            subsets = [
                FeatureSubset(mask, m) for mask in range(lo, min(lo + batch, 1 << m))
            ]
            for node in scorer.score_batch(subsets):
                index += 1
                if best is None or node_key(node) < node_key(best):
                    best = node
                trace.append(TraceEntry(index, node.subset, node.score, best.score))
    except EvaluationBudgetError:
        status = STATUS_BUDGET
        if best is None:
            raise
    return _finish("exhaustive", best, trace, scorer, counters0, t0, config, status)


STRATEGIES = {
    "greedy_forward": greedy_forward,
    "greedy_backward": greedy_backward,
    "greedy_bfs": greedy_bfs,
    "bfs_crossover": bfs_crossover,
    "genetic": genetic,
    "exhaustive": exhaustive,
}
