"""End-to-end pipeline: raw grouped values -> feature table -> comparison.

Mirrors the CLI flow (`bfsx featurize` + `bfsx run` + `bfsx freq`) in
library calls: five summary statistics per (region, metric) group form the
feature table, strategies compete on it, and the winner's selected
features are tallied by tag.
"""

import numpy as np

from bfsx import GroupedSamples, build_feature_table, frequency_report, run_experiment
from bfsx.cli import config_from_dict
from bfsx.featurize import save_csv
import json
import tempfile
from pathlib import Path

rng = np.random.default_rng(5)
regions = ("L_frontal", "R_frontal", "midline")
metrics = ("FA", "AWF", "DA")
subjects = [f"subj{i:02d}" for i in range(40)]

# synthetic raw values: the L_frontal/AWF distribution shifts with the target
targets = {s: float(rng.uniform(-2, 2)) for s in subjects}
values = {}
for s in subjects:
    values[s] = {}
    for r in regions:
        for m in metrics:
            loc = targets[s] * 0.8 if (r, m) == ("L_frontal", "AWF") else 0.0
            values[s][(r, m)] = rng.normal(loc=loc, scale=1.0, size=60)

dataset = build_feature_table(GroupedSamples(values), targets)
print(f"feature table: {dataset.n_samples} x {dataset.n_features} "
      f"({len(regions)} regions x {len(metrics)} metrics x 5 statistics)")

with tempfile.TemporaryDirectory() as tmp:
    csv_path = Path(tmp) / "features.csv"
    save_csv(dataset, csv_path)
    out_dir = Path(tmp) / "results"
    config = config_from_dict({
        "dataset": {"csv": str(csv_path), "target": "target"},
        "strategies": ["greedy_forward", "greedy_bfs", "bfs_crossover"],
        "gbt": {"n_trees": 25, "max_depth": 2, "learning_rate": 0.3},
        "cv": {"k": 4, "repeats": 1},
        "patience": 8,
        "budget": 800,
        "seed": 5,
        "out_dir": str(out_dir),
    })
    comparison = run_experiment(config)
    print("\n" + comparison.format_table(include_wall_time=False))

    report_docs = [
        json.loads((out_dir / label / "report.json").read_text())
        for label in ("greedy_bfs", "bfs_crossover")
    ]
    freq = frequency_report(report_docs, dataset.tags)
    print("\ntags selected by the two best-first runs:")
    print(freq.format_text())
