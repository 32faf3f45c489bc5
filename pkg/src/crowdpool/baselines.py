"""Reference target pipelines: raw empirical distributions (PD), one-hot
most-frequent labels (SL), and Dawid-Skene annotator-confusion EM (DS)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Dataset,
    LabelDistribution,
    PooledLabels,
    ValidationError,
    empirical_distribution,
)


def pd_targets(ds: Dataset) -> PooledLabels:
    """Identity on empirical distributions; Stage 1 skipped."""
    return PooledLabels({it.id: empirical_distribution(it) for it in ds.items})


def sl_targets(ds: Dataset) -> PooledLabels:
    """One-hot at the most frequent label, ties to the lowest index."""
    out = {}
    for it in ds.items:
        hot = np.zeros(it.counts.size)
        hot[int(np.argmax(it.counts))] = 1.0
        out[it.id] = LabelDistribution(hot)
    return PooledLabels(out)


@dataclass
class DawidSkeneModel:
    class_prior: np.ndarray
    confusion: np.ndarray  # (n_annotators, d, d) row-stochastic
    item_posteriors: dict  # item id -> LabelDistribution
    annotator_index: dict  # annotator id -> int
    synthetic_annotators: bool = False
    objective_trace: list = None

    def targets(self) -> PooledLabels:
        return PooledLabels(self.item_posteriors)


def synthesize_annotations(ds: Dataset):
    """Pseudo-annotators by position: annotation k of each item is credited
    to annotator "pos-k". Used when a corpus ships only counts."""
    per_item = []
    for it in ds.items:
        labels = np.repeat(np.arange(it.counts.size), it.counts)
        per_item.append([(f"pos-{k}", int(l)) for k, l in enumerate(labels)])
    return per_item


def dawid_skene_fit(ds: Dataset, smoothing: float = 0.01, max_iter: int = 100,
                    tol: float = 1e-6, seed: int = 0,
                    synthesize: bool = True) -> DawidSkeneModel:
    """EM over per-annotator confusion matrices.

    Posteriors are initialized from the empirical distributions; M-step uses
    additive smoothing on confusion rows and the class prior; converges when
    the largest posterior change drops below tol. When annotator ids are
    absent and `synthesize` is set, pseudo-annotators are assigned by
    position within each item.
    """
    if len(ds) == 0:
        raise ValidationError("dataset has no items")
    d = ds.d
    synthetic = any(it.annotations is None for it in ds.items)
    if synthetic:
        if not synthesize:
            raise ValidationError(
                "no annotator-level labels present; rerun with synthesize=True "
                "to use positional pseudo-annotators"
            )
        per_item = synthesize_annotations(ds)
    else:
        per_item = [list(it.annotations) for it in ds.items]

    annotators = sorted({a for anns in per_item for a, _ in anns})
    a_index = {a: i for i, a in enumerate(annotators)}
    A = len(annotators)
    n = len(ds)

    # (item, annotator, label) triples
    items_idx, ann_idx, lab_idx = [], [], []
    for i, anns in enumerate(per_item):
        for a, l in anns:
            items_idx.append(i)
            ann_idx.append(a_index[a])
            lab_idx.append(l)
    items_idx = np.array(items_idx)
    ann_idx = np.array(ann_idx)
    lab_idx = np.array(lab_idx)

    post = np.array([empirical_distribution(it).probs for it in ds.items])

    def m_step(post):
        prior = post.sum(axis=0) + smoothing
        prior /= prior.sum()
        # conf[a, true, observed] += post[i, true] for each (i, a, observed)
        conf_obs = np.full((A, d, d), smoothing)  # (annotator, observed, true)
        np.add.at(conf_obs, (ann_idx, lab_idx), post[items_idx])
        conf = conf_obs.transpose(0, 2, 1)
        conf = conf / conf.sum(axis=2, keepdims=True)
        return prior, conf

    def e_step(prior, conf):
        log_post = np.tile(np.log(prior), (n, 1))
        log_terms = np.log(conf[ann_idx, :, lab_idx])  # (T, d)
        np.add.at(log_post, items_idx, log_terms)
        log_norm = log_post.max(axis=1, keepdims=True)
        ll_rows = log_norm[:, 0] + np.log(
            np.exp(log_post - log_norm).sum(axis=1))
        new_post = np.exp(log_post - ll_rows[:, None])
        return new_post, float(ll_rows.sum())

    def penalized(ll, prior, conf):
        # smoothing acts as a Dirichlet(1 + smoothing) MAP prior; this is the
        # objective EM is guaranteed not to decrease
        return ll + smoothing * (np.log(prior).sum() + np.log(conf).sum())

    trace = []
    prior, conf = m_step(post)
    for _ in range(max_iter):
        new_post, ll = e_step(prior, conf)
        obj = penalized(ll, prior, conf)
        if trace:
            assert obj >= trace[-1] - 1e-7 * max(1.0, abs(trace[-1])), (
                f"Dawid-Skene objective decreased: {trace[-1]} -> {obj}"
            )
        trace.append(obj)
        delta = float(np.max(np.abs(new_post - post)))
        post = new_post
        prior, conf = m_step(post)
        if delta < tol:
            break

    posteriors = {
        ds.items[i].id: LabelDistribution(post[i] / post[i].sum())
        for i in range(n)
    }
    return DawidSkeneModel(class_prior=prior, confusion=conf,
                           item_posteriors=posteriors, annotator_index=a_index,
                           synthetic_annotators=synthetic,
                           objective_trace=trace)
