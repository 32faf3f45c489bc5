import numpy as np
import pytest

from crowdpool.core import DataItem, Dataset


def make_item(i, counts, features=None, text=None, annotations=None):
    return DataItem(id=f"it-{i:04d}", counts=counts, features=features,
                    text=text, annotations=annotations)


def random_dataset(n=50, d=4, feature_dim=6, seed=0, max_annotations=8):
    """Items with random features and random small annotation counts."""
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n):
        total = int(rng.integers(1, max_annotations + 1))
        counts = np.bincount(rng.integers(0, d, size=total), minlength=d)
        features = rng.normal(size=feature_dim)
        items.append(make_item(i, counts, features=features))
    return Dataset(items, [f"l{j}" for j in range(d)])


def grouped_dataset(n_per_group, group_dists, group_features, seed=0,
                    exact=False):
    """Planted label groups: every item in group g draws (or copies) the
    group's label distribution and sits at the group's feature point."""
    rng = np.random.default_rng(seed)
    group_dists = np.asarray(group_dists, dtype=float)
    group_features = np.asarray(group_features, dtype=float)
    d = group_dists.shape[1]
    items = []
    i = 0
    for g in range(group_dists.shape[0]):
        for _ in range(n_per_group):
            if exact:
                # counts proportional to the group distribution, scaled to ints
                counts = np.rint(group_dists[g] * 20).astype(int)
                if counts.sum() == 0:
                    counts[0] = 1
            else:
                labs = rng.choice(d, size=5, p=group_dists[g])
                counts = np.bincount(labs, minlength=d)
            items.append(make_item(i, counts, features=group_features[g],
                                   text=str(g)))
            i += 1
    return Dataset(items, [f"l{j}" for j in range(d)])


@pytest.fixture
def small_random_dataset():
    return random_dataset(n=40, d=4, feature_dim=6, seed=3)
