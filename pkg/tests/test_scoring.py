"""Scoring: r^2, stratified folds, Pearson p-values, cache accounting."""

import math

import numpy as np
import pytest

from bfsx.featurize import SynthSpec, synth_dataset
from bfsx.gbt import GbtParams
from bfsx.lattice import FeatureSubset, make_subset
from bfsx.scoring import (
    CvParams,
    DegenerateInputError,
    DegenerateTargetError,
    EvaluationBudgetError,
    ScoreCache,
    ScoredNode,
    SubsetScorer,
    cache_get_or_score,
    cv_r2,
    pearson,
    r2_score,
    score_subset,
    stratified_kfold,
    stratify_bins,
    student_t_two_sided_p,
)


class TestR2:
    def test_perfect_fit(self):
        y = np.array([0.3, 1.2, -0.7, 2.0])
        assert r2_score(y, y) == pytest.approx(1.0, abs=1e-12)

    def test_mean_predictor_is_zero(self):
        y = np.array([0.0, 1.0, 2.0, 3.0])
        assert r2_score(y, np.full(4, y.mean())) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_case(self):
        # MSE = 1/4, population Var = 5/4 -> 1 - 0.2 = 0.8
        y = np.array([0.0, 1.0, 2.0, 3.0])
        y_hat = np.array([0.0, 1.0, 2.0, 4.0])
        assert r2_score(y, y_hat) == pytest.approx(0.8, abs=1e-12)

    def test_can_be_negative(self):
        y = np.array([0.0, 1.0, 2.0, 3.0])
        assert r2_score(y, y[::-1].copy()) < 0

    def test_constant_target_rejected(self):
        with pytest.raises(DegenerateTargetError):
            r2_score(np.ones(5), np.arange(5.0))


class TestStratifyBins:
    def test_one_sample_per_bin(self):
        labels = stratify_bins(np.array([-3.0, -1.5, 0.0, 1.5, 3.0]), 5)
        assert labels.tolist() == [0, 1, 2, 3, 4]

    def test_constant_target_single_bin(self):
        assert stratify_bins(np.full(7, 1.0), 5).tolist() == [0] * 7

    def test_maximum_goes_to_last_bin(self):
        labels = stratify_bins(np.array([0.0, 2.5, 5.0, 10.0]), 4)
        assert labels.tolist() == [0, 1, 2, 3]

    def test_uniform_target_fills_bins_evenly(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            y = rng.uniform(-3, 3, size=1000)
            labels = stratify_bins(y, 5)
            counts = np.bincount(labels, minlength=5)
            assert np.all(np.abs(counts - 200) <= 60)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            stratify_bins(np.arange(3.0), 5)


class TestStratifiedKfold:
    def test_single_bin_even_split(self):
        y = np.arange(10.0) * 0  # constant -> one bin
        folds = stratified_kfold(y, CvParams(k=5, n_bins=1, repeats=1, seed=0))
        counts = np.bincount(folds[0].fold_of, minlength=5)
        assert counts.tolist() == [2, 2, 2, 2, 2]

    def test_perfect_stratification(self):
        # 5 bins x 5 samples each -> every fold gets exactly one per bin
        y = np.repeat([0.0, 1.0, 2.0, 3.0, 4.0], 5)
        cv = CvParams(k=5, n_bins=5, repeats=1, seed=3)
        folds = stratified_kfold(y, cv)
        bins = stratify_bins(y, 5)
        for b in range(5):
            per_fold = np.bincount(folds[0].fold_of[bins == b], minlength=5)
            assert per_fold.tolist() == [1, 1, 1, 1, 1]

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        y = rng.normal(size=40)
        cv = CvParams(k=5, n_bins=5, repeats=3, seed=11)
        a = stratified_kfold(y, cv)
        b = stratified_kfold(y, cv)
        for fa, fb in zip(a, b):
            assert np.array_equal(fa.fold_of, fb.fold_of)

    def test_repeats_differ(self):
        rng = np.random.default_rng(8)
        y = rng.normal(size=60)
        folds = stratified_kfold(y, CvParams(k=5, n_bins=5, repeats=3, seed=2))
        assert not np.array_equal(folds[0].fold_of, folds[1].fold_of)
        assert not np.array_equal(folds[1].fold_of, folds[2].fold_of)

    def test_balance_property(self):
        # per-(bin, fold) counts differ by at most one, for any target/seed
        for trial in range(20):
            rng = np.random.default_rng(100 + trial)
            y = rng.normal(size=154)
            cv = CvParams(k=5, n_bins=5, repeats=2, seed=trial)
            bins = stratify_bins(y, cv.n_bins)
            for assignment in stratified_kfold(y, cv):
                for b in range(cv.n_bins):
                    counts = np.bincount(assignment.fold_of[bins == b], minlength=cv.k)
                    assert counts.max() - counts.min() <= 1
                # every sample assigned exactly once and all folds non-empty
                overall = np.bincount(assignment.fold_of, minlength=cv.k)
                assert overall.sum() == 154
                assert overall.min() >= 1

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            stratified_kfold(np.arange(3.0), CvParams(k=5, n_bins=1))


class TestPearson:
    def test_affine_image(self):
        y = np.array([1.0, 2.0, 4.0, 4.5, 7.0, 9.0])
        r, p = pearson(y, 2 * y + 1)
        assert r == pytest.approx(1.0, abs=1e-12)
        assert p == pytest.approx(0.0, abs=1e-12)

    def test_negation(self):
        y = np.array([1.0, 2.0, 4.0, 4.5, 7.0, 9.0])
        r, _ = pearson(y, -y)
        assert r == pytest.approx(-1.0, abs=1e-12)

    def test_affine_invariance_and_sign_flip(self):
        rng = np.random.default_rng(21)
        y = rng.normal(size=25)
        z = rng.normal(size=25)
        r0, p0 = pearson(y, z)
        r1, p1 = pearson(y, 3.5 * z + 2.0)
        assert r1 == pytest.approx(r0, abs=1e-12)
        assert p1 == pytest.approx(p0, abs=1e-12)
        r2, _ = pearson(y, -z)
        assert r2 == pytest.approx(-r0, abs=1e-12)

    def test_n12_r058_p_value(self):
        # vectors constructed to have sample correlation exactly 0.58
        n, r_target = 12, 0.58
        rng = np.random.default_rng(0)
        y = rng.normal(size=n)
        z = rng.normal(size=n)
        yc = y - y.mean()
        yc /= np.sqrt(yc @ yc)
        zc = z - z.mean()
        zc -= (zc @ yc) * yc
        zc /= np.sqrt(zc @ zc)
        y_hat = r_target * yc + math.sqrt(1 - r_target**2) * zc
        r, p = pearson(y, y_hat)
        assert r == pytest.approx(0.58, abs=1e-12)
        assert p == pytest.approx(0.0480, abs=5e-4)
        # independent oracle: numerical integration of the t density tail
        df = n - 2
        t = r_target * math.sqrt(df / (1 - r_target**2))
        xs = np.linspace(t, 120.0, 1_200_001)
        const = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2))
        pdf = const / math.sqrt(df * math.pi) * (1 + xs * xs / df) ** (-(df + 1) / 2)
        p_integral = 2.0 * float(np.trapezoid(pdf, xs))
        assert p == pytest.approx(p_integral, rel=1e-6)

    def test_tail_symmetry(self):
        assert student_t_two_sided_p(2.0, 10) == pytest.approx(
            student_t_two_sided_p(-2.0, 10), abs=1e-15
        )

    def test_constant_input_rejected(self):
        with pytest.raises(DegenerateInputError):
            pearson(np.ones(5), np.arange(5.0))
        with pytest.raises(DegenerateInputError):
            pearson(np.arange(5.0), np.ones(5))

    def test_needs_three_samples(self):
        with pytest.raises(ValueError):
            pearson(np.array([0.0, 1.0]), np.array([0.0, 1.0]))


def make_dataset(seed=0, n=60, m=6, relevant=frozenset({0}), noise=0.0):
    return synth_dataset(
        SynthSpec(n_samples=n, n_features=m, relevant=relevant, noise_sd=noise, seed=seed)
    )


FAST_GBT = GbtParams(n_trees=40, max_depth=3, learning_rate=0.25)
FAST_CV = CvParams(k=5, n_bins=5, repeats=2, seed=7)


class TestScoreSubset:
    def test_empty_subset_is_roughly_zero(self):
        ds = make_dataset(seed=1, noise=0.5)
        node = score_subset(ds, FeatureSubset.empty(6), FAST_GBT, FAST_CV)
        assert -0.35 < node.score <= 0.05
        assert node.eval_cost == FAST_CV.k * FAST_CV.repeats

    def test_planted_feature_scores_high(self):
        ds = make_dataset(seed=2, noise=0.0)
        node = score_subset(ds, make_subset({0}, 6), FAST_GBT, FAST_CV)
        assert node.score > 0.95

    def test_bitwise_deterministic(self):
        ds = make_dataset(seed=3, noise=0.3)
        subset = make_subset({0, 2, 4}, 6)
        a = score_subset(ds, subset, FAST_GBT, FAST_CV)
        b = score_subset(ds, subset, FAST_GBT, FAST_CV)
        assert a.score == b.score  # exact float equality

    def test_full_subset_matches_cv_r2(self):
        ds = make_dataset(seed=4, noise=0.2)
        node = score_subset(ds, FeatureSubset.full(6), FAST_GBT, FAST_CV)
        assert node.score == cv_r2(ds.X, ds.y, FAST_GBT, FAST_CV)

    def test_width_mismatch_rejected(self):
        ds = make_dataset()
        with pytest.raises(ValueError):
            score_subset(ds, FeatureSubset.empty(5), FAST_GBT, FAST_CV)

    def test_degenerate_target_rejected(self):
        from bfsx.featurize import Dataset

        ds = Dataset(
            X=np.random.default_rng(0).normal(size=(10, 2)),
            y=np.zeros(10),
            feature_names=("a", "b"),
        )
        with pytest.raises(DegenerateTargetError):
            score_subset(ds, FeatureSubset.empty(2), FAST_GBT, CvParams(k=2, repeats=1))

    def test_per_subset_depth_grid(self):
        from dataclasses import replace

        ds = make_dataset(seed=9, noise=0.4)
        subset = make_subset({0, 1}, 6)
        per_depth = {
            d: score_subset(ds, subset, replace(FAST_GBT, max_depth=d), FAST_CV).score
            for d in (2, 3, 4)
        }
        node = score_subset(ds, subset, FAST_GBT, FAST_CV, depth_grid=[2, 3, 4])
        assert node.score == max(per_depth.values())
        assert node.eval_cost == 3 * FAST_CV.k * FAST_CV.repeats

    def test_scorer_with_depth_grid_counts_extra_fits(self):
        ds = make_dataset(seed=10, noise=0.4)
        scorer = SubsetScorer.for_dataset(ds, FAST_GBT, FAST_CV, depth_grid=[2, 3])
        scorer.score(make_subset({0}, 6))
        assert scorer.model_fits == 2 * FAST_CV.k * FAST_CV.repeats


class TestScoreCache:
    def test_hit_avoids_recompute(self):
        calls = []

        def scorer(subset):
            calls.append(subset)
            return ScoredNode(subset=subset, score=float(subset.popcount()))

        cache = ScoreCache()
        s = make_subset({1}, 4)
        a = cache_get_or_score(cache, s, scorer)
        b = cache_get_or_score(cache, s, scorer)
        assert a == b
        assert len(calls) == 1
        assert cache.hits == 1 and cache.misses == 1

    def test_distinct_subsets_two_entries(self):
        cache = ScoreCache()
        fn = lambda s: ScoredNode(subset=s, score=0.0)
        cache_get_or_score(cache, make_subset({0}, 3), fn)
        cache_get_or_score(cache, make_subset({1}, 3), fn)
        assert len(cache) == 2


class TestSubsetScorer:
    def test_counters_and_cache_size_agree(self):
        scorer = SubsetScorer.from_function(lambda s: float(s.popcount()), 5)
        subsets = [make_subset({i}, 5) for i in range(5)]
        scorer.score_batch(subsets)
        scorer.score_batch(subsets)  # all hits
        assert scorer.evaluations == 5
        assert len(scorer.cache) == 5
        assert scorer.hits == 5

    def test_budget_trims_then_raises(self):
        scorer = SubsetScorer.from_function(lambda s: 0.0, 6, budget=3)
        with pytest.raises(EvaluationBudgetError):
            scorer.score_batch([make_subset({i}, 6) for i in range(6)])
        assert scorer.evaluations == 3
        assert len(scorer.cache) == 3

    def test_single_score_budget(self):
        scorer = SubsetScorer.from_function(lambda s: 0.0, 4, budget=1)
        scorer.score(FeatureSubset.empty(4))
        scorer.score(FeatureSubset.empty(4))  # cached, free
        with pytest.raises(EvaluationBudgetError):
            scorer.score(FeatureSubset.full(4))

    def test_model_fit_accounting(self):
        ds = make_dataset(seed=5, noise=0.4)
        scorer = SubsetScorer.for_dataset(ds, FAST_GBT, FAST_CV)
        scorer.score(make_subset({0, 1}, 6))
        scorer.score(make_subset({2}, 6))
        scorer.score(make_subset({0, 1}, 6))  # hit
        assert scorer.evaluations == 2
        assert scorer.model_fits == 2 * FAST_CV.k * FAST_CV.repeats

    def test_threaded_batch_matches_sequential(self):
        ds = make_dataset(seed=6, noise=0.4)
        subsets = [make_subset({i}, 6) for i in range(6)] + [make_subset({i, 5}, 6) for i in range(5)]
        seq = SubsetScorer.for_dataset(ds, FAST_GBT, FAST_CV, threads=1)
        par = SubsetScorer.for_dataset(ds, FAST_GBT, FAST_CV, threads=2)
        a = seq.score_batch(subsets)
        b = par.score_batch(subsets)
        assert [n.score for n in a] == [n.score for n in b]
        assert seq.evaluations == par.evaluations
