"""Experiment orchestration and the command-line interface.

Subcommands: `run` (strategy comparison on a dataset), `synth` (emit a
synthetic dataset), `featurize` (long-format raw values to a feature table),
`freq` (tag-frequency report over best subsets), `oracle` (exhaustive search
for small M). Flag precedence is flags > config file > defaults.

Artifacts written under the output directory are deterministic for a fixed
seed: wall times are printed but never serialized, so reruns hash equal.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .featurize import (
    Dataset,
    SynthSpec,
    build_feature_table,
    load_csv,
    load_voxel_csv,
    save_csv,
    synth_dataset,
)
from .gbt import GbtParams, grid_search_depth
from .lattice import FeatureSubset
from .scoring import CvParams, SubsetScorer, pearson, predictions_for_subset
from .search import STRATEGIES, GaParams, SearchReport, STATUS_OK

DEFAULT_BUDGET = 20000
DEFAULT_PATIENCE = 25


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


@dataclass(frozen=True)
class StrategySpec:
    """One configured strategy run: name plus optional parameter overrides."""

    name: str
    label: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.name!r}; known: {sorted(STRATEGIES)}"
            )


@dataclass
class ExperimentConfig:
    """A full experiment: dataset source, strategies, model and CV settings.

    `depth_grid_mode="experiment"` searches the tree depth once on the full
    feature set before the strategies run; `"per_subset"` re-searches it for
    every candidate subset (far more model fits per evaluation).
    """

    dataset: dict
    strategies: list[StrategySpec]
    gbt: GbtParams = GbtParams()
    cv: CvParams = CvParams()
    depth_grid: list[int] | None = None
    depth_grid_mode: str = "experiment"
    patience: float = DEFAULT_PATIENCE
    budget: int | None = DEFAULT_BUDGET
    seed: int = 0
    threads: int = 1
    cohort: str | None = None
    out_dir: str | None = None
    concurrent_strategies: bool = False

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        labels = [s.label for s in self.strategies]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate strategy labels: {labels}")
        if self.depth_grid_mode not in ("experiment", "per_subset"):
            raise ConfigError(
                f"depth_grid_mode must be 'experiment' or 'per_subset', "
                f"got {self.depth_grid_mode!r}"
            )
        for key in ("csv", "voxels", "targets"):
            path = self.dataset.get(key)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"dataset file does not exist: {path}")

    def snapshot(self) -> dict:
        """Deterministic config summary embedded in artifacts (no paths that
        vary across reruns, no wall-clock data)."""
        return {
            "dataset": self.dataset,
            "cohort": self.cohort,
            "strategies": [
                {"name": s.name, "label": s.label, "params": s.params}
                for s in self.strategies
            ],
            "gbt": {
                "n_trees": self.gbt.n_trees,
                "max_depth": self.gbt.max_depth,
                "learning_rate": self.gbt.learning_rate,
                "min_samples_leaf": self.gbt.min_samples_leaf,
                "seed": self.gbt.seed,
            },
            "cv": {
                "k": self.cv.k,
                "n_bins": self.cv.n_bins,
                "repeats": self.cv.repeats,
                "seed": self.cv.seed,
            },
            "depth_grid": self.depth_grid,
            "depth_grid_mode": self.depth_grid_mode,
            "patience": self.patience if math.isfinite(self.patience) else None,
            "budget": self.budget,
            "seed": self.seed,
        }


def _parse_strategy_entry(entry) -> StrategySpec:
    if isinstance(entry, str):
        return StrategySpec(name=entry, label=entry)
    if isinstance(entry, dict):
        params = {k: v for k, v in entry.items() if k not in ("name", "label")}
        name = entry.get("name")
        if name is None:
            raise ConfigError(f"strategy entry needs a 'name': {entry}")
        return StrategySpec(name=name, label=entry.get("label", name), params=params)
    raise ConfigError(f"bad strategy entry: {entry!r}")


def config_from_dict(doc: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from a JSON document; `overrides` (from flags) win."""
    doc = dict(doc)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    dataset = doc.get("dataset", {})
    if "target" in overrides:
        dataset = dict(dataset, target=overrides["target"])

    strategies_raw = overrides.get("strategies", doc.get("strategies", []))
    strategies = [_parse_strategy_entry(e) for e in strategies_raw]

    seed = int(overrides.get("seed", doc.get("seed", 0)))
    gbt_doc = dict(doc.get("gbt", {}))
    gbt = GbtParams(**gbt_doc)
    cv_doc = dict(doc.get("cv", {}))
    cv_doc.setdefault("seed", seed)
    cv = CvParams(**cv_doc)

    patience = overrides.get("patience", doc.get("patience", DEFAULT_PATIENCE))
    patience = math.inf if patience is None else float(patience)
    budget = overrides.get("budget", doc.get("budget", DEFAULT_BUDGET))

    return ExperimentConfig(
        dataset=dataset,
        strategies=strategies,
        gbt=gbt,
        cv=cv,
        depth_grid=doc.get("depth_grid"),
        depth_grid_mode=doc.get("depth_grid_mode", "experiment"),
        patience=patience,
        budget=None if budget in (None, 0) else int(budget),
        seed=seed,
        threads=int(overrides.get("threads", doc.get("threads", 1))),
        cohort=overrides.get("cohort", doc.get("cohort")),
        out_dir=overrides.get("out_dir", doc.get("out_dir")),
        concurrent_strategies=bool(doc.get("concurrent_strategies", False)),
    )


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    return config_from_dict(json.loads(path.read_text()), overrides)


def _load_dataset(config: ExperimentConfig) -> Dataset:
    src = config.dataset
    if "csv" in src:
        dataset = load_csv(src["csv"], src.get("target", "target"))
    elif "synth" in src:
        spec_doc = dict(src["synth"])
        spec_doc.setdefault("seed", config.seed)
        spec_doc["relevant"] = frozenset(spec_doc.get("relevant", ()))
        dataset = synth_dataset(SynthSpec(**spec_doc))
    elif "voxels" in src:
        grouped = load_voxel_csv(src["voxels"])
        targets = _load_targets_csv(src["targets"])
        dataset = build_feature_table(grouped, targets)
    else:
        raise ConfigError(
            "dataset source must provide 'csv', 'synth', or 'voxels'+'targets'"
        )
    if config.cohort is not None:
        dataset = dataset.filter_cohort(config.cohort)
    return dataset


def _load_targets_csv(path: str | Path) -> dict[str, float]:
    """subject_id,target rows mapping each subject to its regression target."""
    targets: dict[str, float] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "subject_id" not in reader.fieldnames:
            raise ConfigError(f"{path}: targets CSV needs a subject_id column")
        value_cols = [c for c in reader.fieldnames if c != "subject_id"]
        if len(value_cols) != 1:
            raise ConfigError(f"{path}: expected exactly one target column")
        for row in reader:
            targets[row["subject_id"]] = float(row[value_cols[0]])
    return targets


@dataclass
class ComparisonRow:
    """One strategy's line in the comparison table."""

    label: str
    strategy: str
    status: str
    score: float | None = None
    pearson_r: float | None = None
    pearson_p: float | None = None
    evaluations: int | None = None
    model_fits: int | None = None
    wall_time: float | None = None
    best_subset: str | None = None
    best_size: int | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.status != STATUS_OK


@dataclass
class ComparisonReport:
    """Per-strategy comparison plus the shared depth-grid result, if any."""

    rows: list[ComparisonRow]
    config: dict
    depth_grid: dict | None = None

    @property
    def any_failed(self) -> bool:
        return any(r.failed for r in self.rows)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "depth_grid": self.depth_grid,
            "rows": [
                {
                    "label": r.label,
                    "strategy": r.strategy,
                    "status": r.status,
                    "score": r.score,
                    "pearson_r": r.pearson_r,
                    "pearson_p": r.pearson_p,
                    "evaluations": r.evaluations,
                    "model_fits": r.model_fits,
                    "best_subset": r.best_subset,
                    "best_size": r.best_size,
                    "error": r.error,
                }
                for r in self.rows
            ],
        }

    def format_table(self, include_wall_time: bool = True) -> str:
        headers = ["strategy", "status", "r2", "pearson_r", "p_value",
                   "evals", "fits", "size"]
        if include_wall_time:
            headers.append("seconds")

        def fmt(x, spec=".4f"):
            return "-" if x is None else format(x, spec)

        lines = []
        for r in self.rows:
            line = [
                r.label,
                r.status,
                fmt(r.score),
                fmt(r.pearson_r),
                fmt(r.pearson_p),
                "-" if r.evaluations is None else str(r.evaluations),
                "-" if r.model_fits is None else str(r.model_fits),
                "-" if r.best_size is None else str(r.best_size),
            ]
            if include_wall_time:
                line.append(fmt(r.wall_time, ".2f"))
            lines.append(line)
        widths = [
            max(len(headers[i]), *(len(row[i]) for row in lines)) if lines else len(headers[i])
            for i in range(len(headers))
        ]
        out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        out.append("  ".join("-" * w for w in widths))
        for row in lines:
            out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(out)


def _strategy_kwargs(spec: StrategySpec, config: ExperimentConfig) -> dict:
    params = dict(spec.params)
    params.pop("budget", None)
    if spec.name in ("greedy_bfs", "bfs_crossover"):
        patience = params.pop("patience", config.patience)
        patience = math.inf if patience is None else float(patience)
        return {"patience": patience, **params}
    if spec.name in ("greedy_forward", "greedy_backward"):
        return {"max_no_improve": int(params.pop("max_no_improve", 1)), **params}
    if spec.name == "genetic":
        ga_doc = dict(params)
        ga_doc.setdefault("seed", config.seed)
        return {"ga": GaParams(**ga_doc)}
    return params


def run_experiment(config: ExperimentConfig) -> ComparisonReport:
    """Run every configured strategy on the configured dataset.

    Writes, when `out_dir` is set: per strategy `report.json`, `trace.csv`,
    and `predictions.csv` (pooled held-out predictions of the best subset),
    plus `comparison.json` and `comparison.txt`. A strategy failure is
    recorded in its row and does not abort the other strategies.
    """
    dataset = _load_dataset(config)
    cv = config.cv
    gbt = config.gbt

    depth_grid_doc = None
    per_subset_grid = None
    if config.depth_grid and config.depth_grid_mode == "per_subset":
        per_subset_grid = [int(d) for d in config.depth_grid]
    elif config.depth_grid:
        best_depth, best_score, scores = grid_search_depth(
            dataset.X, dataset.y, config.depth_grid, cv, gbt
        )
        gbt = replace(gbt, max_depth=best_depth)
        depth_grid_doc = {
            "depths": [int(d) for d in config.depth_grid],
            "best_depth": int(best_depth),
            "best_score": best_score,
            "scores": {str(d): s for d, s in sorted(scores.items())},
            "model_fits": len(config.depth_grid) * cv.k * cv.repeats,
        }

    def run_one(spec: StrategySpec) -> ComparisonRow:
        budget = spec.params.get("budget", config.budget)
        row = ComparisonRow(label=spec.label, strategy=spec.name, status="error")
        try:
            scorer = SubsetScorer.for_dataset(
                dataset, gbt, cv,
                budget=None if budget in (None, 0) else int(budget),
                threads=config.threads,
                depth_grid=per_subset_grid,
            )
            fn = STRATEGIES[spec.name]
            report = fn(dataset, scorer, **_strategy_kwargs(spec, config))
            preds = predictions_for_subset(dataset, report.best.subset, gbt, cv)
            r, p = pearson(
                np.tile(dataset.y, preds.shape[0]), preds.reshape(-1)
            )
            row = ComparisonRow(
                label=spec.label,
                strategy=spec.name,
                status=report.status,
                score=report.best.score,
                pearson_r=r,
                pearson_p=p,
                evaluations=report.evaluations,
                model_fits=report.model_fits,
                wall_time=report.wall_time,
                best_subset=report.best.subset.bits(),
                best_size=report.best.subset.popcount(),
            )
            if config.out_dir is not None:
                out = Path(config.out_dir) / spec.label
                out.mkdir(parents=True, exist_ok=True)
                report.write_json(out / "report.json")
                report.write_trace_csv(out / "trace.csv")
                _write_predictions_csv(out / "predictions.csv", dataset.y, preds)
        except Exception as exc:  # per-strategy isolation
            row.error = f"{type(exc).__name__}: {exc}"
        return row

    if config.concurrent_strategies and len(config.strategies) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=len(config.strategies)) as pool:
            rows = list(pool.map(run_one, config.strategies))
    else:
        rows = [run_one(spec) for spec in config.strategies]

    comparison = ComparisonReport(
        rows=rows, config=config.snapshot(), depth_grid=depth_grid_doc
    )
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(
            json.dumps(comparison.to_json_dict(), indent=2) + "\n"
        )
        (out / "comparison.txt").write_text(
            comparison.format_table(include_wall_time=False) + "\n"
        )
    return comparison


def _write_predictions_csv(path: Path, y: np.ndarray, preds: np.ndarray) -> None:
    """Pooled held-out predictions, one row per (repeat, sample)."""
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repeat", "row", "y_true", "y_pred"])
        for rep in range(preds.shape[0]):
            for i in range(preds.shape[1]):
                writer.writerow([rep, i, repr(float(y[i])), repr(float(preds[rep, i]))])


def frequency_report(
    search_reports: Sequence[SearchReport | dict],
    tags: Sequence[dict],
) -> "FrequencyReport":
    """Count how often each region/metric/statistic tag appears among the
    best subsets of the given reports; counts add across reports."""
    if tags is None:
        raise ValueError("dataset has no feature tags")
    counts = {dim: {} for dim in ("metric", "region", "statistic")}
    n_features = len(tags)
    for report in search_reports:
        if isinstance(report, SearchReport):
            bits = report.best.subset.bits()
        else:
            bits = report["best"]["subset"]
        subset = FeatureSubset.from_bits(bits)
        if subset.n_features != n_features:
            raise ValueError(
                f"report subset width {subset.n_features} does not match "
                f"{n_features} tagged features"
            )
        for i in subset.indices():
            tag = tags[i]
            for dim in counts:
                if dim not in tag:
                    raise ValueError(f"feature {i} is missing tag {dim!r}")
                value = tag[dim]
                counts[dim][value] = counts[dim].get(value, 0) + 1
    ordered = {
        dim: sorted(vals.items(), key=lambda kv: (-kv[1], kv[0]))
        for dim, vals in counts.items()
    }
    return FrequencyReport(counts=ordered, n_reports=len(search_reports))


@dataclass
class FrequencyReport:
    """Tag-frequency counts per dimension, sorted by descending count."""

    counts: dict[str, list[tuple[str, int]]]
    n_reports: int

    def to_json_dict(self) -> dict:
        return {
            "n_reports": self.n_reports,
            "counts": {
                dim: [{"tag": t, "count": c} for t, c in pairs]
                for dim, pairs in self.counts.items()
            },
        }

    def format_text(self) -> str:
        lines = []
        for dim, pairs in self.counts.items():
            rendered = ", ".join(f"{t}({c})" for t, c in pairs)
            lines.append(f"{dim}: {rendered if rendered else '(none)'}")
        return "\n".join(lines)


def compare_methods(config: ExperimentConfig) -> int:
    """Run the experiment and print the comparison table; nonzero exit when
    any strategy failed or exceeded its budget."""
    try:
        comparison = run_experiment(config)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(comparison.format_table(include_wall_time=True))
    for row in comparison.rows:
        if row.error is not None:
            print(f"{row.label}: {row.error}", file=sys.stderr)
    return 1 if comparison.any_failed else 0


# ---------------------------------------------------------------------------
# argparse wiring
# ---------------------------------------------------------------------------


def _add_common_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--patience", type=int, help="best-first patience")
    p.add_argument("--budget", type=int, help="evaluation budget per strategy")
    p.add_argument(
        "--strategies",
        help="comma-separated strategy names (overrides config list)",
    )
    p.add_argument("--target", help="target column name")
    p.add_argument("--cohort", help="restrict to one cohort label")
    p.add_argument("--threads", type=int, help="worker threads per scorer")
    p.add_argument("--data", help="feature CSV (shorthand for dataset.csv)")


def _overrides_from_args(args: argparse.Namespace) -> dict:
    overrides = {
        "seed": args.seed,
        "out_dir": args.out_dir,
        "patience": args.patience,
        "budget": args.budget,
        "target": args.target,
        "cohort": args.cohort,
        "threads": args.threads,
    }
    if args.strategies:
        overrides["strategies"] = [s.strip() for s in args.strategies.split(",") if s.strip()]
    return overrides


def _build_run_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = _overrides_from_args(args)
    if args.config is not None:
        config = load_config(args.config, overrides)
        if args.data:
            config.dataset = dict(config.dataset, csv=args.data)
            config.__post_init__()
        return config
    if not args.data:
        raise ConfigError("either --config or --data is required")
    doc = {
        "dataset": {"csv": args.data, "target": args.target or "target"},
        "strategies": ["greedy_forward", "greedy_bfs", "bfs_crossover"],
    }
    return config_from_dict(doc, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bfsx",
        description="Wrapper feature selection via best-first subset search",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a strategy-comparison experiment")
    _add_common_run_flags(p_run)

    p_synth = sub.add_parser("synth", help="emit a synthetic dataset CSV")
    p_synth.add_argument("--samples", type=int, required=True)
    p_synth.add_argument("--features", type=int, required=True)
    p_synth.add_argument("--relevant", default="", help="comma-separated indices")
    p_synth.add_argument("--effect", choices=("linear", "interaction"), default="linear")
    p_synth.add_argument("--noise-sd", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--target", default="target")
    p_synth.add_argument("--out", required=True, help="output CSV path")

    p_feat = sub.add_parser("featurize", help="raw grouped values to a feature table")
    p_feat.add_argument("--voxels", required=True, help="long-format raw-value CSV")
    p_feat.add_argument("--targets", required=True, help="subject_id,target CSV")
    p_feat.add_argument("--target", default="target", help="target column name to write")
    p_feat.add_argument("--out", required=True, help="output CSV path")

    p_freq = sub.add_parser("freq", help="tag-frequency report over best subsets")
    p_freq.add_argument("reports", nargs="+", help="SearchReport JSON paths")
    p_freq.add_argument("--data", required=True, help="feature CSV with tag sidecar")
    p_freq.add_argument("--target", default="target")
    p_freq.add_argument("--out", help="optional JSON output path")

    p_oracle = sub.add_parser("oracle", help="exhaustive search (M <= 20)")
    _add_common_run_flags(p_oracle)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return compare_methods(_build_run_config(args))
        if args.command == "synth":
            relevant = frozenset(
                int(s) for s in args.relevant.split(",") if s.strip() != ""
            )
            spec = SynthSpec(
                n_samples=args.samples,
                n_features=args.features,
                relevant=relevant,
                effect=args.effect,
                noise_sd=args.noise_sd,
                seed=args.seed,
            )
            save_csv(synth_dataset(spec), args.out, target_column=args.target)
            print(f"wrote {args.out}")
            return 0
        if args.command == "featurize":
            grouped = load_voxel_csv(args.voxels)
            targets = _load_targets_csv(args.targets)
            dataset = build_feature_table(grouped, targets)
            save_csv(dataset, args.out, target_column=args.target)
            print(f"wrote {args.out} ({dataset.n_samples} x {dataset.n_features})")
            return 0
        if args.command == "freq":
            dataset = load_csv(args.data, args.target)
            docs = [json.loads(Path(p).read_text()) for p in args.reports]
            report = frequency_report(docs, dataset.tags)
            print(report.format_text())
            if args.out:
                Path(args.out).write_text(
                    json.dumps(report.to_json_dict(), indent=2) + "\n"
                )
            return 0
        if args.command == "oracle":
            config = _build_run_config(args)
            config.strategies = [StrategySpec(name="exhaustive", label="exhaustive")]
            return compare_methods(config)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
