"""Metrics and reports: mean KL, argmax accuracy, entropy histograms, and
qualitative example surfacing. Both metrics always score against the raw
empirical distributions, never pooled targets."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .core import (
    Dataset,
    ValidationError,
    empirical_distribution,
    item_entropy,
)
from .divergence import DEFAULT_SMOOTHING, SmoothingPolicy, kl
from .learner import TrainedLearner

ENTROPY_BINS = 20


@dataclass
class EvalReport:
    split: Optional[str]
    mean_kl: float
    accuracy: float
    per_item: list  # (id, kl, true_argmax, pred_argmax)
    entropy_histogram: list
    fingerprint: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "kl", "true_argmax", "pred_argmax"])
            writer.writerows(self.per_item)


def evaluate(model: TrainedLearner, split: Dataset,
             s: SmoothingPolicy = DEFAULT_SMOOTHING,
             fingerprint: Optional[dict] = None) -> EvalReport:
    if len(split) == 0:
        raise ValidationError("cannot evaluate an empty split")
    X = split.feature_matrix()
    Y = split.label_matrix()
    probs = model.predict_proba(X)
    per_item = []
    for i, item in enumerate(split.items):
        div = kl(Y[i], probs[i], s)
        per_item.append((item.id, div, int(np.argmax(Y[i])),
                         int(np.argmax(probs[i]))))
    mean_kl = float(np.mean([row[1] for row in per_item]))
    accuracy = float(np.mean([row[2] == row[3] for row in per_item]))
    hist = _entropy_histogram(split)
    return EvalReport(split=split.split, mean_kl=mean_kl, accuracy=accuracy,
                      per_item=per_item, entropy_histogram=hist,
                      fingerprint=fingerprint or {})


def _entropy_histogram(ds: Dataset, bins: int = ENTROPY_BINS):
    entropies = [item_entropy(empirical_distribution(it)) for it in ds.items]
    top = np.log(ds.d)
    counts, _ = np.histogram(entropies, bins=bins, range=(0.0, top))
    return counts.tolist()


def entropy_report(ds: Dataset, k: int = 100, bins: int = ENTROPY_BINS) -> dict:
    """Histogram over [0, ln d] plus the k highest- and lowest-entropy items."""
    if len(ds) == 0:
        raise ValidationError("empty dataset")
    entries = []
    for it in ds.items:
        y = empirical_distribution(it)
        entries.append((it.id, item_entropy(y), y.probs.tolist()))
    entries_low = sorted(entries, key=lambda e: (e[1], e[0]))
    k = min(k, len(entries))
    return {
        "bins": bins,
        "range": [0.0, float(np.log(ds.d))],
        "histogram": _entropy_histogram(ds, bins),
        "lowest": entries_low[:k],
        "highest": list(reversed(entries_low[-k:])),
    }


def surface_examples(report: EvalReport, k: int, mode: str,
                     seed: int = 0) -> list:
    """Pick items to inspect: lowest per-item KL, or a seeded random sample
    of items whose predicted argmax disagrees with the empirical one."""
    if mode not in ("lowest_kl", "disagree_argmax"):
        raise ValidationError(f"unknown surfacing mode {mode!r}")
    if k > len(report.per_item):
        import warnings
        warnings.warn(f"k={k} exceeds split size; clamping to {len(report.per_item)}")
        k = len(report.per_item)
    if k <= 0:
        return []
    if mode == "lowest_kl":
        return sorted(report.per_item, key=lambda row: (row[1], row[0]))[:k]
    mismatched = [row for row in report.per_item if row[2] != row[3]]
    rng = np.random.default_rng(seed)
    k = min(k, len(mismatched))
    idx = rng.choice(len(mismatched), size=k, replace=False) if mismatched else []
    return [mismatched[i] for i in idx]


def write_histogram_data(report: dict, path):
    """gnuplot-friendly two-column histogram dump."""
    lo, hi = report["range"]
    width = (hi - lo) / report["bins"]
    with open(path, "w") as fh:
        fh.write("# bin_center count\n")
        for i, count in enumerate(report["histogram"]):
            fh.write(f"{lo + (i + 0.5) * width} {count}\n")
