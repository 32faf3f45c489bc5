"""Hyperparameter search for Stage 1 under the total-KL objective.

Generative methods sweep the cluster count p in [4, 40]; NBP sweeps the ball
radius r over a 0.1 grid in [0, 15]. The r=0 cell reproduces the raw
distributions and scores exactly 0 by construction, so it is reported but
never selectable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .clustering import (
    METHODS,
    P_MAX,
    P_MIN,
    FmmPriors,
    fit_cluster_model,
    pooled_labels,
)
from .core import Dataset, ValidationError
from .divergence import DEFAULT_SMOOTHING, SmoothingPolicy, kl_rows
from .mixing import FeatureSimplexTransform, mixed_matrices
from .nbp import NbpConfig, nbp_pool, nbp_stage1_score, pairwise_kl

R_GRID = tuple(np.round(np.arange(0.0, 15.0 + 1e-9, 0.1), 1))


@dataclass
class SelectionResult:
    method: str
    w: float
    best_hyperparameter: float
    best_score: float
    grid: list  # (hyperparameter, score)
    skipped: list = field(default_factory=list)  # (hyperparameter, reason)
    dev_score: Optional[float] = None

    def as_rows(self):
        selected = self.best_hyperparameter
        rows = []
        for hp, score in self.grid:
            rows.append({
                "method": self.method,
                "w": self.w,
                "hyperparameter": hp,
                "score": score,
                "selected": bool(hp == selected),
            })
        for hp, reason in self.skipped:
            rows.append({
                "method": self.method,
                "w": self.w,
                "hyperparameter": hp,
                "score": None,
                "selected": False,
                "skipped": reason,
            })
        return rows


def cluster_stage1_score(model, ds: Dataset, w: float,
                         t: FeatureSimplexTransform,
                         s: SmoothingPolicy = DEFAULT_SMOOTHING) -> float:
    """Mean KL between each item's mixed vector and its cluster's centroid
    mixed vector (cluster-mean features mixed with the pooled labels)."""
    pooled = pooled_labels(model, ds)
    ids = ds.ids
    labels = np.array([model.assignments[i] for i in ids])
    X = ds.feature_matrix()
    _, simplex = mixed_matrices(ds, w, t)

    x_cent = np.zeros((model.p, X.shape[1]))
    for k in range(model.p):
        members = X[labels == k]
        if members.shape[0]:
            x_cent[k] = members.mean(axis=0)
    pooled_y = np.asarray([pooled[i].probs for i in ids])
    centroid_simplex = np.concatenate(
        [w * t.normalized(x_cent[labels]), (1.0 - w) * pooled_y], axis=1
    )
    return float(np.mean(kl_rows(simplex, centroid_simplex, s)))


def select_p(method: str, ds: Dataset, w: float, seed: int,
             t: FeatureSimplexTransform, p_grid=None,
             priors: FmmPriors = FmmPriors()) -> SelectionResult:
    if method not in METHODS:
        raise ValidationError(f"unknown clustering method {method!r}")
    if p_grid is None:
        p_grid = range(P_MIN, P_MAX + 1)
    raw, simplex = mixed_matrices(ds, w, t)
    scale = np.array([it.n_annotations for it in ds.items])
    grid = []
    skipped = []
    for p in p_grid:
        try:
            model = fit_cluster_model(method, raw, simplex, p, seed,
                                      w=w, ids=ds.ids, scale=scale, priors=priors)
            score = cluster_stage1_score(model, ds, w, t)
        except (ValidationError, FloatingPointError) as err:
            skipped.append((p, str(err)))
            continue
        grid.append((int(p), score))
    if not grid:
        raise ValidationError(
            f"every grid cell failed for method={method}, w={w}: {skipped[:3]}"
        )
    best_p, best_score = min(grid, key=lambda cell: (cell[1], cell[0]))
    return SelectionResult(method=method, w=w, best_hyperparameter=best_p,
                           best_score=best_score, grid=grid, skipped=skipped)


def select_r(ds: Dataset, w: float, seed: int, t: FeatureSimplexTransform,
             r_grid=R_GRID,
             s: SmoothingPolicy = DEFAULT_SMOOTHING) -> SelectionResult:
    klmat = pairwise_kl(ds, w, t, s)
    grid = []
    for r in r_grid:
        cfg = NbpConfig(r=float(r), w=w, smoothing=s)
        grid.append((float(r), nbp_stage1_score(ds, cfg, t, klmat=klmat)))
    # r=0 scores exactly 0 by construction; exclude the degenerate cell
    candidates = [cell for cell in grid if cell[0] > 0.0]
    if not candidates:
        raise ValidationError("r grid contains no non-degenerate cells")
    best_r, best_score = min(candidates, key=lambda cell: (cell[1], cell[0]))
    return SelectionResult(method="nbp", w=w, best_hyperparameter=best_r,
                           best_score=best_score, grid=grid)


def select_overall(train: Dataset, methods, w_grid, seed: int,
                   t: FeatureSimplexTransform, mode: str = "stage1",
                   dev: Optional[Dataset] = None, learner_config=None,
                   p_grid=None, r_grid=R_GRID) -> list:
    """Rank (method, w) candidates by stage-1 score, or by dev mean KL after
    training the Stage-2 learner on each candidate's pooled labels."""
    if mode not in ("stage1", "stage2-dev"):
        raise ValidationError(f"unknown selection mode {mode!r}")
    results = []
    for method in methods:
        for w in w_grid:
            if method == "nbp":
                res = select_r(train, w, seed, t, r_grid=r_grid)
            else:
                res = select_p(method, train, w, seed, t, p_grid=p_grid)
            results.append(res)

    if mode == "stage1":
        results.sort(key=lambda r: (r.best_score, r.method, r.w))
        return results

    if dev is None or learner_config is None:
        raise ValidationError("stage2-dev mode needs a dev split and learner config")
    from .learner import train as train_learner
    from .evaluation import evaluate

    dev_y = dev.label_matrix()
    dev_pairs = [(it.features, dev_y[i]) for i, it in enumerate(dev.items)]
    for res in results:
        pooled = pool_candidate(res, train, t, seed)
        pairs = [(it.features, pooled[it.id].probs) for it in train.items]
        model = train_learner(pairs, dev_pairs, learner_config)
        res.dev_score = evaluate(model, dev).mean_kl
    results.sort(key=lambda r: (r.dev_score, r.method, r.w))
    return results


def pool_candidate(res: SelectionResult, train: Dataset,
                   t: FeatureSimplexTransform, seed: int):
    """Refit the winning model of a selection result and pool the train split."""
    if res.method == "nbp":
        cfg = NbpConfig(r=res.best_hyperparameter, w=res.w)
        return nbp_pool(train, cfg, t)
    raw, simplex = mixed_matrices(train, res.w, t)
    scale = np.array([it.n_annotations for it in train.items])
    model = fit_cluster_model(res.method, raw, simplex,
                              int(res.best_hyperparameter), seed,
                              w=res.w, ids=train.ids, scale=scale)
    return pooled_labels(model, train)


def write_report(results, json_path=None, csv_path=None):
    rows = [row for res in results for row in res.as_rows()]
    doc = {"format": "selection-report/v1", "rows": rows}
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(doc, fh, indent=1)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["method", "w", "hyperparameter", "score",
                                "selected", "skipped"])
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    return doc
