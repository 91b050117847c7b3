"""Wrapper feature selection by best-first search over the subset lattice.

Feature subsets are vertices of a 2^M lattice; candidate subsets are scored
by cross-validated gradient-boosted-tree regression, and strategies ranging
from greedy forward selection to best-first search with a crossover jump
operator compete for the best-scoring subset.
"""

from .featurize import (
    Dataset,
    GroupedSamples,
    SynthSpec,
    build_feature_table,
    load_csv,
    load_voxel_csv,
    region_stats,
    save_csv,
    synth_dataset,
)
from .gbt import (
    GbtModel,
    GbtParams,
    TreeNode,
    fit_gbt,
    fit_tree,
    grid_search_depth,
    model_from_json,
    model_to_json,
    predict,
)
from .lattice import (
    FeatureSubset,
    LatticeEdge,
    crossover,
    edge_weight,
    hamming,
    make_subset,
    neighbors,
    path_length,
)
from .scoring import (
    CvParams,
    DegenerateInputError,
    DegenerateTargetError,
    EvaluationBudgetError,
    FoldAssignment,
    ScoreCache,
    ScoredNode,
    SubsetScorer,
    cache_get_or_score,
    pearson,
    predictions_for_subset,
    r2_score,
    score_subset,
    stratified_kfold,
    stratify_bins,
)
from .search import (
    GaParams,
    PriorityQueue,
    SearchReport,
    bfs_crossover,
    exhaustive,
    genetic,
    greedy_backward,
    greedy_bfs,
    greedy_forward,
)
from .cli import (
    ComparisonReport,
    ExperimentConfig,
    compare_methods,
    frequency_report,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "GroupedSamples",
    "SynthSpec",
    "build_feature_table",
    "load_csv",
    "load_voxel_csv",
    "region_stats",
    "save_csv",
    "synth_dataset",
    "GbtModel",
    "GbtParams",
    "TreeNode",
    "fit_gbt",
    "fit_tree",
    "grid_search_depth",
    "model_from_json",
    "model_to_json",
    "predict",
    "FeatureSubset",
    "LatticeEdge",
    "crossover",
    "edge_weight",
    "hamming",
    "make_subset",
    "neighbors",
    "path_length",
    "CvParams",
    "DegenerateInputError",
    "DegenerateTargetError",
    "EvaluationBudgetError",
    "FoldAssignment",
    "ScoreCache",
    "ScoredNode",
    "SubsetScorer",
    "cache_get_or_score",
    "pearson",
    "predictions_for_subset",
    "r2_score",
    "score_subset",
    "stratified_kfold",
    "stratify_bins",
    "GaParams",
    "PriorityQueue",
    "SearchReport",
    "bfs_crossover",
    "exhaustive",
    "genetic",
    "greedy_backward",
    "greedy_bfs",
    "greedy_forward",
    "ComparisonReport",
    "ExperimentConfig",
    "compare_methods",
    "frequency_report",
    "run_experiment",
]
