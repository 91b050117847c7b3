"""Subset scoring: repeated stratified k-fold cross-validation, r^2, Pearson
correlation with a Student-t p-value, and the memoizing score cache shared by
all search strategies.

A subset's score is the mean over CV repeats of the r^2 computed on the
pooled held-out predictions of that repeat. Fold assignments are derived
once per (target, CvParams) and shared across every subset of a run, so
scores of different subsets are directly comparable.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .featurize import Dataset
from .gbt import GbtParams, _max_nodes
from .lattice import FeatureSubset


class DegenerateTargetError(ValueError):
    """The target has zero variance, so r^2 is undefined."""


class DegenerateInputError(ValueError):
    """An input vector is constant where variation is required."""


class EvaluationBudgetError(RuntimeError):
    """The configured cap on distinct subset evaluations was reached."""


@dataclass(frozen=True)
class CvParams:
    """Repeated stratified k-fold configuration.

    The target range is quantized into `n_bins` equal-width bins and each
    fold receives the same per-bin share (up to one sample). One seed drives
    counter-based substreams per (repeat, bin), so assignments are stable
    under parallel evaluation.
    """

    k: int = 5
    n_bins: int = 5
    repeats: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class FoldAssignment:
    """Fold id per sample for one CV repeat."""

    fold_of: np.ndarray
    k: int

    def __post_init__(self):
        fold_of = np.asarray(self.fold_of, dtype=np.int64)
        object.__setattr__(self, "fold_of", fold_of)
        if fold_of.ndim != 1:
            raise ValueError("fold_of must be 1-d")
        if fold_of.size and not (0 <= fold_of.min() and fold_of.max() < self.k):
            raise ValueError("fold ids must lie in [0, k)")
        fold_of.setflags(write=False)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)


@dataclass(frozen=True)
class ScoredNode:
    """A feature subset with its cross-validated score."""

    subset: FeatureSubset
    score: float
    eval_cost: int = 0

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("score must be finite")


def r2_score(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Fraction of variance explained: 1 - MSE/Var with population variance.

    May be negative when predictions are worse than the target mean.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValueError("y and y_hat must be 1-d vectors of equal length")
    if y.size < 2:
        raise ValueError("r2 needs at least 2 samples")
    var = float(np.mean((y - np.mean(y)) ** 2))
    if var == 0.0:
        raise DegenerateTargetError("target variance is zero")
    mse = float(np.mean((y - y_hat) ** 2))
    return 1.0 - mse / var


def stratify_bins(y: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-width bin labels over [min(y), max(y)]; the max lands in the last
    bin, and an all-constant target collapses to bin 0."""
    y = np.asarray(y, dtype=np.float64)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if y.size < n_bins:
        raise ValueError("need at least one sample per bin")
    lo, hi = float(y.min()), float(y.max())
    if lo == hi:
        return np.zeros(y.size, dtype=np.int64)
    width = (hi - lo) / n_bins
    labels = np.floor((y - lo) / width).astype(np.int64)
    return np.clip(labels, 0, n_bins - 1)


def _bin_rng(seed: int, repeat: int, bin_index: int) -> np.random.Generator:
    # Counter-based stream keyed by (run seed, repeat, bin).
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=(seed, repeat, bin_index)))
    )


def stratified_kfold(y: np.ndarray, cv: CvParams) -> list[FoldAssignment]:
    """One FoldAssignment per repeat; per-(bin, fold) counts differ by <= 1.

    Within each bin the samples are shuffled by the repeat/bin substream and
    dealt round-robin, with the dealing position carried across bins so fold
    sizes stay balanced overall.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if n < cv.k:
        raise ValueError(f"cannot split {n} samples into {cv.k} folds")
    bins = stratify_bins(y, cv.n_bins)
    assignments = []
    for rep in range(cv.repeats):
        fold_of = np.empty(n, dtype=np.int64)
        offset = 0
        for b in range(cv.n_bins):
            rows = np.flatnonzero(bins == b)
            if rows.size == 0:
                continue
            rng = _bin_rng(cv.seed, rep, b)
            shuffled = rows[rng.permutation(rows.size)]
            fold_of[shuffled] = (offset + np.arange(rows.size)) % cv.k
            offset = (offset + rows.size) % cv.k
        assignments.append(FoldAssignment(fold_of=fold_of, k=cv.k))
    return assignments


def _heldout_predictions(
    X: np.ndarray,
    y: np.ndarray,
    columns: Sequence[int],
    gbt: GbtParams,
    folds: Sequence[FoldAssignment],
) -> np.ndarray:
    """Held-out predictions per repeat, aligned to sample order (repeats, N).

    The empty column set is scored as the constant training-mean predictor.
    """
    n = X.shape[0]
    preds = np.empty((len(folds), n))
    if len(columns) == 0:
        for r, assignment in enumerate(folds):
            for fold in range(assignment.k):
                test = assignment.test_rows(fold)
                train = assignment.train_rows(fold)
                preds[r, test] = float(np.mean(y[train]))
        return preds

    Xsub = np.ascontiguousarray(X[:, list(columns)])
    for r, assignment in enumerate(folds):
        for fold in range(assignment.k):
            test = assignment.test_rows(fold)
            train = assignment.train_rows(fold)
            Xtr = np.ascontiguousarray(Xsub[train])
            ytr = np.ascontiguousarray(y[train])
            order = _kernels.presort_columns(Xtr)
            cap = _max_nodes(gbt.max_depth, Xtr.shape[0])
            feat = np.empty((gbt.n_trees, cap), dtype=np.int64)
            thresh = np.empty((gbt.n_trees, cap))
            left = np.empty((gbt.n_trees, cap), dtype=np.int64)
            right = np.empty((gbt.n_trees, cap), dtype=np.int64)
            value = np.empty((gbt.n_trees, cap))
            n_nodes = np.empty(gbt.n_trees, dtype=np.int64)
            _kernels.fit_forest(
                Xtr, ytr, order, gbt.n_trees, gbt.max_depth,
                gbt.learning_rate, gbt.min_samples_leaf,
                feat, thresh, left, right, value, n_nodes,
            )
            preds[r, test] = _kernels.predict_forest(
                np.ascontiguousarray(Xsub[test]), float(np.mean(ytr)),
                gbt.learning_rate, gbt.n_trees, feat, thresh, left, right, value,
            )
    return preds


def _pooled_r2(y: np.ndarray, preds: np.ndarray) -> float:
    """Mean over repeats of the r^2 on that repeat's pooled held-out predictions."""
    return float(np.mean([r2_score(y, preds[r]) for r in range(preds.shape[0])]))


def cv_r2(
    X: np.ndarray,
    y: np.ndarray,
    gbt: GbtParams,
    cv: CvParams,
    folds: Sequence[FoldAssignment] | None = None,
) -> float:
    """Cross-validated r^2 of the boosted model on all columns of X."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if folds is None:
        folds = stratified_kfold(y, cv)
    if float(np.mean((y - np.mean(y)) ** 2)) == 0.0:
        raise DegenerateTargetError("target variance is zero")
    preds = _heldout_predictions(X, y, range(X.shape[1]), gbt, folds)
    return _pooled_r2(y, preds)


def score_subset(
    dataset: Dataset,
    subset: FeatureSubset,
    gbt: GbtParams,
    cv: CvParams,
    folds: Sequence[FoldAssignment] | None = None,
    depth_grid: Sequence[int] | None = None,
) -> ScoredNode:
    """Cross-validated r^2 of the boosted model restricted to `subset`.

    Pure in its arguments: repeated calls agree bit-for-bit. Passing
    precomputed `folds` skips re-deriving the assignments; they must come
    from `stratified_kfold(dataset.y, cv)`. When `depth_grid` is given the
    tree depth is re-searched for this subset and the best depth's score is
    returned (ties to the smaller depth), at `len(depth_grid)` times the
    model fits.
    """
    if dataset.n_features != subset.n_features:
        raise ValueError(
            f"subset width {subset.n_features} does not match dataset "
            f"M={dataset.n_features}"
        )
    y = dataset.y
    if float(np.mean((y - np.mean(y)) ** 2)) == 0.0:
        raise DegenerateTargetError("target variance is zero")
    if folds is None:
        folds = stratified_kfold(y, cv)
    if depth_grid is None:
        preds = _heldout_predictions(dataset.X, y, subset.indices(), gbt, folds)
        return ScoredNode(
            subset=subset,
            score=_pooled_r2(y, preds),
            eval_cost=cv.k * cv.repeats,
        )
    if len(depth_grid) == 0:
        raise ValueError("depth_grid must be non-empty")
    from dataclasses import replace

    best_score: float | None = None
    for depth in sorted(int(d) for d in depth_grid):
        preds = _heldout_predictions(
            dataset.X, y, subset.indices(), replace(gbt, max_depth=depth), folds
        )
        score = _pooled_r2(y, preds)
        if best_score is None or score > best_score:
            best_score = score
    return ScoredNode(
        subset=subset,
        score=best_score,
        eval_cost=len(depth_grid) * cv.k * cv.repeats,
    )


def predictions_for_subset(
    dataset: Dataset,
    subset: FeatureSubset,
    gbt: GbtParams,
    cv: CvParams,
) -> np.ndarray:
    """Held-out predictions per repeat, shape (repeats, N); the raw material
    for predicted-vs-true scatter plots and Pearson statistics."""
    if dataset.n_features != subset.n_features:
        raise ValueError("subset width does not match dataset")
    folds = stratified_kfold(dataset.y, cv)
    return _heldout_predictions(dataset.X, dataset.y, subset.indices(), gbt, folds)


# ---------------------------------------------------------------------------
# Pearson correlation with a two-sided Student-t p-value.
# The regularized incomplete beta function is evaluated by the standard
# continued fraction, which avoids a stats dependency and is checked in the
# tests against numerical integration and a permutation oracle.
# ---------------------------------------------------------------------------

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-15
_BETACF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) via the continued fraction, symmetrized for stability."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with `df` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def pearson(y: np.ndarray, y_hat: np.ndarray) -> tuple[float, float]:
    """Sample Pearson r and the two-sided p-value under the t distribution
    with N-2 degrees of freedom."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValueError("y and y_hat must be 1-d vectors of equal length")
    n = y.size
    if n < 3:
        raise ValueError("pearson needs at least 3 samples")
    a = y - y.mean()
    b = y_hat - y_hat.mean()
    denom = math.sqrt(float(a @ a)) * math.sqrt(float(b @ b))
    if denom == 0.0:
        raise DegenerateInputError("pearson is undefined for constant input")
    r = float(a @ b) / denom
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, student_t_two_sided_p(t, n - 2)


# ---------------------------------------------------------------------------
# Score cache and the memoizing scorer used by every search strategy.
# ---------------------------------------------------------------------------


class ScoreCache:
    """Map from subset to its scored node, with hit/miss counters.

    Lookups never change a stored score; concurrent insert keeps the first
    value (duplicates computed in parallel are identical by determinism).
    """

    def __init__(self):
        self._entries: dict[FeatureSubset, ScoredNode] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, subset: FeatureSubset) -> ScoredNode | None:
        with self._lock:
            node = self._entries.get(subset)
            if node is not None:
                self.hits += 1
            return node

    def put(self, node: ScoredNode) -> ScoredNode:
        """Insert-if-absent; returns the stored node and counts a miss."""
        with self._lock:
            stored = self._entries.setdefault(node.subset, node)
            self.misses += 1
            return stored

    def __contains__(self, subset: FeatureSubset) -> bool:
        with self._lock:
            return subset in self._entries

    def __len__(self) -> int:
        return len(self._entries)


def cache_get_or_score(
    cache: ScoreCache,
    subset: FeatureSubset,
    scorer: Callable[[FeatureSubset], ScoredNode],
) -> ScoredNode:
    """Return the cached score or compute, store, and return it."""
    node = cache.get(subset)
    if node is not None:
        return node
    return cache.put(scorer(subset))


class SubsetScorer:
    """Memoizing, budget-guarded scorer with optional threaded batch scoring.

    `evaluations` counts distinct subsets actually computed (equals the cache
    size when the scorer owns a fresh cache); `model_fits` adds
    `fits_per_eval` per computed subset. When a batch would cross `budget`,
    the affordable prefix (in the caller's order) is still evaluated before
    EvaluationBudgetError is raised, so results are identical for any thread
    count.
    """

    def __init__(
        self,
        score_fn: Callable[[FeatureSubset], ScoredNode],
        n_features: int,
        fits_per_eval: int = 0,
        budget: int | None = None,
        threads: int = 1,
        cache: ScoreCache | None = None,
    ):
        if budget is not None and budget < 1:
            raise ValueError("budget must be >= 1")
        if threads < 1:
            raise ValueError("threads must be >= 1")
        self._score_fn = score_fn
        self.n_features = n_features
        self.fits_per_eval = fits_per_eval
        self.budget = budget
        self.threads = threads
        self.cache = cache if cache is not None else ScoreCache()
        self.model_fits = 0

    @classmethod
    def for_dataset(
        cls,
        dataset: Dataset,
        gbt: GbtParams,
        cv: CvParams,
        budget: int | None = None,
        threads: int = 1,
        depth_grid: Sequence[int] | None = None,
    ) -> "SubsetScorer":
        """Cross-validation scorer with fold assignments fixed for the run.

        `depth_grid` switches on per-subset depth re-search (expensive: the
        fit count per evaluation scales with the grid size).
        """
        y = dataset.y
        if float(np.mean((y - np.mean(y)) ** 2)) == 0.0:
            raise DegenerateTargetError("target variance is zero")
        folds = stratified_kfold(y, cv)

        def score_fn(subset: FeatureSubset) -> ScoredNode:
            return score_subset(
                dataset, subset, gbt, cv, folds=folds, depth_grid=depth_grid
            )

        grid_factor = len(depth_grid) if depth_grid else 1
        return cls(
            score_fn,
            n_features=dataset.n_features,
            fits_per_eval=grid_factor * cv.k * cv.repeats,
            budget=budget,
            threads=threads,
        )

    @classmethod
    def from_function(
        cls,
        fn: Callable[[FeatureSubset], float],
        n_features: int,
        budget: int | None = None,
    ) -> "SubsetScorer":
        """Wrap a deterministic score landscape, e.g. for tests and oracles."""

        def score_fn(subset: FeatureSubset) -> ScoredNode:
            return ScoredNode(subset=subset, score=float(fn(subset)))

        return cls(score_fn, n_features=n_features, budget=budget)

    @property
    def evaluations(self) -> int:
        return self.cache.misses

    @property
    def hits(self) -> int:
        return self.cache.hits

    def _check_width(self, subset: FeatureSubset) -> None:
        if subset.n_features != self.n_features:
            raise ValueError("subset width does not match the scorer")

    def score(self, subset: FeatureSubset) -> ScoredNode:
        self._check_width(subset)
        cached = self.cache.get(subset)
        if cached is not None:
            return cached
        if self.budget is not None and self.evaluations >= self.budget:
            raise EvaluationBudgetError(
                f"evaluation budget of {self.budget} subsets exhausted"
            )
        node = self.cache.put(self._score_fn(subset))
        self.model_fits += self.fits_per_eval
        return node

    def score_batch(self, subsets: Sequence[FeatureSubset]) -> list[ScoredNode]:
        """Score many subsets; results are returned in input order.

        Raises EvaluationBudgetError after evaluating the affordable prefix
        of the uncached subsets when the budget would be exceeded.
        """
        for s in subsets:
            self._check_width(s)
        cached: dict[FeatureSubset, ScoredNode] = {}
        to_compute: list[FeatureSubset] = []
        seen: set[FeatureSubset] = set()
        for s in subsets:
            node = self.cache.get(s)
            if node is not None:
                cached[s] = node
            elif s not in seen:
                seen.add(s)
                to_compute.append(s)

        truncated = False
        if self.budget is not None:
            room = self.budget - self.evaluations
            if len(to_compute) > room:
                to_compute = to_compute[:room]
                truncated = True

        if to_compute:
            if self.threads > 1 and len(to_compute) > 1:
                with ThreadPoolExecutor(max_workers=self.threads) as pool:
                    computed = list(pool.map(self._score_fn, to_compute))
            else:
                computed = [self._score_fn(s) for s in to_compute]
            # Insert in canonical (input) order so counters and cache contents
            # are identical for any thread count.
            for node in computed:
                cached[node.subset] = self.cache.put(node)
                self.model_fits += self.fits_per_eval

        if truncated:
            raise EvaluationBudgetError(
                f"evaluation budget of {self.budget} subsets exhausted"
            )
        return [cached[s] for s in subsets]
