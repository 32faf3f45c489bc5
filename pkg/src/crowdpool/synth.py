"""Bundled synthetic planted-cluster dataset.

Items fall into latent groups. Each group activates a small set of feature
dimensions (a sparse nonnegative profile) and owns a group-level label
distribution; items jitter the profile multiplicatively and draw only a few
annotations from the group distribution. The jitter keeps items within a
group distinguishable, so a learner fit on raw per-item distributions can
chase annotation noise, while the sparse profiles keep groups far apart in
the divergence geometry and give cluster-based pooling real signal.
"""

from __future__ import annotations

import numpy as np

from .core import DataItem, Dataset

N_GROUPS = 12
N_LABELS = 5
FEATURE_DIM = 24
ACTIVE_DIMS = 4
ANNOTATORS_PER_ITEM = 3
ANNOTATOR_POOL = 30
FEATURE_JITTER = 0.8
LABEL_CONCENTRATION = 1.5


def make_synthetic(n: int = 2000, seed: int = 0,
                   n_groups: int = N_GROUPS, d: int = N_LABELS,
                   feature_dim: int = FEATURE_DIM,
                   annotators_per_item: int = ANNOTATORS_PER_ITEM) -> Dataset:
    rng = np.random.default_rng(seed)
    profiles = np.zeros((n_groups, feature_dim))
    for g in range(n_groups):
        dims = rng.choice(feature_dim, size=ACTIVE_DIMS, replace=False)
        profiles[g, dims] = 0.5 + rng.random(ACTIVE_DIMS)
    group_dists = rng.dirichlet(np.full(d, LABEL_CONCENTRATION), size=n_groups)
    annotators = [f"a{j:02d}" for j in range(ANNOTATOR_POOL)]

    items = []
    for i in range(n):
        g = int(rng.integers(n_groups))
        features = profiles[g] * rng.uniform(1.0 - FEATURE_JITTER,
                                             1.0 + FEATURE_JITTER,
                                             size=feature_dim)
        who = rng.choice(ANNOTATOR_POOL, size=annotators_per_item, replace=False)
        labels = rng.choice(d, size=annotators_per_item, p=group_dists[g])
        annotations = [(annotators[a], int(l)) for a, l in zip(who, labels)]
        counts = np.bincount(labels, minlength=d)
        items.append(DataItem(id=f"item-{i:05d}", counts=counts,
                              features=features, text=f"synthetic group {g}",
                              annotations=annotations))
    label_names = [f"label-{j}" for j in range(d)]
    return Dataset(items, label_names)
