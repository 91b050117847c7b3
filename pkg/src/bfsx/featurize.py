"""Dataset construction: per-group summary statistics, tabular ingestion, and
synthetic regression datasets with planted relevant features.

The feature table convention is five statistics per (region, metric) group:
mean, standard deviation, skewness, kurtosis, and histogram entropy. Columns
are named ``<region>_<metric>_<stat>`` in region-major order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

STAT_NAMES = ("mean", "std", "skewness", "kurtosis", "entropy")
ENTROPY_BINS = 64
COHORT_COLUMN = "cohort"


@dataclass(frozen=True)
class Dataset:
    """An immutable numeric feature table with a regression target.

    `tags` optionally carries a {region, metric, statistic} dict per feature
    (used by frequency reports); `cohorts` optionally labels each sample.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    tags: tuple[dict, ...] | None = None
    cohorts: tuple[str, ...] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if X.ndim != 2:
            raise ValueError("X must be 2-d")
        if y.shape != (X.shape[0],):
            raise ValueError("y length must match the number of rows")
        if len(self.feature_names) != X.shape[1]:
            raise ValueError("one feature name per column required")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature names must be unique")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("dataset contains non-finite entries")
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple(self.tags))
            if len(self.tags) != X.shape[1]:
                raise ValueError("one tag dict per feature required")
        if self.cohorts is not None:
            object.__setattr__(self, "cohorts", tuple(self.cohorts))
            if len(self.cohorts) != X.shape[0]:
                raise ValueError("one cohort label per sample required")
        X.setflags(write=False)
        y.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def filter_cohort(self, label: str) -> "Dataset":
        if self.cohorts is None:
            raise ValueError("dataset has no cohort labels")
        keep = [i for i, c in enumerate(self.cohorts) if c == label]
        if not keep:
            raise ValueError(f"no samples in cohort {label!r}")
        return Dataset(
            X=self.X[keep],
            y=self.y[keep],
            feature_names=self.feature_names,
            tags=self.tags,
            cohorts=tuple(self.cohorts[i] for i in keep),
            metadata=dict(self.metadata, cohort=label),
        )


class GroupedSamples:
    """Per-subject vectors of raw values, grouped by (region, metric)."""

    def __init__(self, values: Mapping[str, Mapping[tuple[str, str], Sequence[float]]]):
        self._values: dict[str, dict[tuple[str, str], np.ndarray]] = {}
        for subject, groups in values.items():
            converted = {}
            for key, vec in groups.items():
                arr = np.asarray(vec, dtype=np.float64)
                if arr.size == 0:
                    raise ValueError(
                        f"empty value vector for subject {subject!r}, group {key!r}"
                    )
                if not np.all(np.isfinite(arr)):
                    raise ValueError(
                        f"non-finite values for subject {subject!r}, group {key!r}"
                    )
                converted[(str(key[0]), str(key[1]))] = arr
            self._values[str(subject)] = converted

    @property
    def subjects(self) -> tuple[str, ...]:
        return tuple(self._values)

    def groups(self, subject: str) -> dict[tuple[str, str], np.ndarray]:
        return self._values[subject]

    def group_keys(self) -> tuple[tuple[str, str], ...]:
        """Union of (region, metric) keys, region-major, sorted for determinism."""
        keys = set()
        for groups in self._values.values():
            keys.update(groups)
        return tuple(sorted(keys))


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic dataset whose target depends on a known subset.

    `effect="linear"` draws one weight per relevant feature; `"interaction"`
    reserves the two highest relevant indices for a pairwise product term and
    keeps the rest linear. The target is standardized to zero mean and unit
    variance after noise is added.
    """

    n_samples: int
    n_features: int
    relevant: frozenset[int] = frozenset()
    effect: str = "linear"
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "relevant", frozenset(int(i) for i in self.relevant))
        if self.n_samples < 2 or self.n_features < 1:
            raise ValueError("need n_samples >= 2 and n_features >= 1")
        if any(not 0 <= i < self.n_features for i in self.relevant):
            raise ValueError("relevant indices must lie in [0, n_features)")
        if self.effect not in ("linear", "interaction"):
            raise ValueError(f"unknown effect family: {self.effect!r}")
        if self.effect == "interaction" and len(self.relevant) < 2:
            raise ValueError("interaction effect needs at least 2 relevant features")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not self.relevant and self.noise_sd == 0:
            raise ValueError("no relevant features and no noise leaves y constant")


def region_stats(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    """(mean, std, skewness, kurtosis, entropy) of one value vector.

    Population moments throughout: std with divisor n, skewness m3/m2^1.5,
    excess kurtosis m4/m2^2 - 3. Entropy is the Shannon entropy in nats of a
    64-bin equal-width histogram over [min, max], with 0*log(0) = 0. Constant
    vectors return (c, 0, 0, 0, 0) so downstream matrices stay finite.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("region_stats requires a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("region_stats requires finite values")
    mean = float(np.mean(arr))
    centered = arr - mean
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        return (mean, 0.0, 0.0, 0.0, 0.0)
    std = math.sqrt(m2)
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    skewness = m3 / m2**1.5
    kurtosis = m4 / m2**2 - 3.0
    counts, _ = np.histogram(arr, bins=ENTROPY_BINS, range=(arr.min(), arr.max()))
    p = counts[counts > 0] / arr.size
    entropy = float(-np.sum(p * np.log(p)))
    return (mean, std, skewness, kurtosis, entropy)


def build_feature_table(
    grouped: GroupedSamples, targets: Mapping[str, float]
) -> Dataset:
    """Five statistics per (region, metric) group, one row per subject.

    Column order is region-major, then metric, then the fixed statistic
    order; every subject must provide every group.
    """
    keys = grouped.group_keys()
    subjects = grouped.subjects
    missing_targets = [s for s in subjects if s not in targets]
    if missing_targets:
        raise ValueError(f"missing targets for subjects: {missing_targets}")

    names = []
    tags = []
    for region, metric in keys:
        for stat in STAT_NAMES:
            names.append(f"{region}_{metric}_{stat}")
            tags.append({"region": region, "metric": metric, "statistic": stat})

    X = np.empty((len(subjects), len(names)))
    y = np.empty(len(subjects))
    for i, subject in enumerate(subjects):
        groups = grouped.groups(subject)
        col = 0
        for key in keys:
            if key not in groups:
                raise ValueError(
                    f"subject {subject!r} is missing group {key[0]!r}/{key[1]!r}"
                )
            X[i, col : col + 5] = region_stats(groups[key])
            col += 5
        y[i] = float(targets[subject])

    return Dataset(
        X=X,
        y=y,
        feature_names=tuple(names),
        tags=tuple(tags),
        metadata={"subjects": list(subjects)},
    )


def synth_dataset(spec: SynthSpec) -> Dataset:
    """Standard-normal features; target built from the planted relevant set."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    X = rng.standard_normal((spec.n_samples, spec.n_features))
    relevant = sorted(spec.relevant)
    signal = np.zeros(spec.n_samples)
    weights: dict[str, object] = {}
    if relevant:
        if spec.effect == "interaction":
            linear_idx = relevant[:-2]
            pair = (relevant[-2], relevant[-1])
        else:
            linear_idx = relevant
            pair = None
        w = rng.uniform(0.5, 1.5, size=len(linear_idx))
        signs = rng.integers(0, 2, size=len(linear_idx)) * 2 - 1
        w = w * signs
        if linear_idx:
            signal = X[:, linear_idx] @ w
        weights["linear"] = {int(j): float(wj) for j, wj in zip(linear_idx, w)}
        if pair is not None:
            w_pair = float(rng.uniform(0.5, 1.5) * (rng.integers(0, 2) * 2 - 1))
            signal = signal + w_pair * X[:, pair[0]] * X[:, pair[1]]
            weights["interaction"] = {"pair": [int(pair[0]), int(pair[1])], "weight": w_pair}
    y = signal + rng.normal(0.0, spec.noise_sd, size=spec.n_samples)
    sd = float(np.std(y))
    if sd == 0.0:
        raise ValueError("generated target is constant; increase noise_sd or signal")
    y = (y - float(np.mean(y))) / sd
    names = tuple(f"f{j:03d}" for j in range(spec.n_features))
    return Dataset(
        X=X,
        y=y,
        feature_names=names,
        metadata={
            "relevant": [int(i) for i in relevant],
            "synth_spec": {
                "n_samples": spec.n_samples,
                "n_features": spec.n_features,
                "relevant": [int(i) for i in relevant],
                "effect": spec.effect,
                "noise_sd": spec.noise_sd,
                "seed": spec.seed,
            },
            "weights": weights,
        },
    )


def _sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".meta.json")


def save_csv(dataset: Dataset, path: str | Path, target_column: str = "target") -> None:
    """Write the feature table with full float precision plus a metadata sidecar."""
    path = Path(path)
    if target_column in dataset.feature_names:
        raise ValueError(f"target column name {target_column!r} collides with a feature")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(dataset.feature_names) + [target_column]
        if dataset.cohorts is not None:
            header.append(COHORT_COLUMN)
        writer.writerow(header)
        for i in range(dataset.n_samples):
            row = [repr(float(v)) for v in dataset.X[i]] + [repr(float(dataset.y[i]))]
            if dataset.cohorts is not None:
                row.append(dataset.cohorts[i])
            writer.writerow(row)
    sidecar = {
        "target_column": target_column,
        "feature_tags": list(dataset.tags) if dataset.tags is not None else None,
        "metadata": dataset.metadata,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2))


def load_csv(path: str | Path, target_column: str) -> Dataset:
    """Load a feature table; all non-target, non-cohort columns become features.

    Every feature/target cell must parse as a finite number; offending cells
    are reported by (1-based data row, column name). A column literally named
    ``cohort`` is treated as a per-sample label, not a feature. A metadata
    sidecar written by `save_csv` is picked up automatically when present.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            dupes = sorted({c for c in header if header.count(c) > 1})
            raise ValueError(f"{path}: duplicate header columns: {dupes}")
        if target_column not in header:
            raise ValueError(f"{path}: target column {target_column!r} not found")
        target_idx = header.index(target_column)
        cohort_idx = header.index(COHORT_COLUMN) if COHORT_COLUMN in header else None
        feature_cols = [
            (i, name)
            for i, name in enumerate(header)
            if i != target_idx and i != cohort_idx
        ]
        rows_X: list[list[float]] = []
        rows_y: list[float] = []
        cohorts: list[str] = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}"
                )

            def parse(cell: str, column: str) -> float:
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise ValueError(
                        f"{path}: row {row_no}, column {column!r}: "
                        f"cannot parse {cell!r} as a finite number"
                    )
                return v

            rows_X.append([parse(row[i], name) for i, name in feature_cols])
            rows_y.append(parse(row[target_idx], target_column))
            if cohort_idx is not None:
                cohorts.append(row[cohort_idx])

    if not rows_X:
        raise ValueError(f"{path}: no data rows")

    tags = None
    metadata: dict = {"source": str(path)}
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        doc = json.loads(sidecar.read_text())
        if doc.get("feature_tags") is not None:
            tags = tuple(doc["feature_tags"])
        metadata.update(doc.get("metadata", {}))

    return Dataset(
        X=np.asarray(rows_X, dtype=np.float64),
        y=np.asarray(rows_y, dtype=np.float64),
        feature_names=tuple(name for _, name in feature_cols),
        tags=tags,
        cohorts=tuple(cohorts) if cohorts else None,
        metadata=metadata,
    )


def load_voxel_csv(path: str | Path) -> GroupedSamples:
    """Read long-format raw values: columns subject_id, region, metric, value."""
    path = Path(path)
    values: dict[str, dict[tuple[str, str], list[float]]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"subject_id", "region", "metric", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(
                f"{path}: voxel CSV needs columns {sorted(required)}, "
                f"got {reader.fieldnames}"
            )
        for row_no, row in enumerate(reader, start=1):
            try:
                v = float(row["value"])
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise ValueError(
                    f"{path}: row {row_no}: cannot parse value {row['value']!r}"
                )
            subject = values.setdefault(row["subject_id"], {})
            subject.setdefault((row["region"], row["metric"]), []).append(v)
    if not values:
        raise ValueError(f"{path}: no data rows")
    return GroupedSamples(values)
