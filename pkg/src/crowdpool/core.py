"""Domain types shared by every pipeline stage.

All types are immutable after construction and validated eagerly, so the
numerical code downstream can assume well-formed simplex vectors and
consistent dimensions without re-checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SIMPLEX_ATOL = 1e-9


class ValidationError(ValueError):
    """Raised when input data violates a structural invariant."""


def _as_float_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class LabelDistribution:
    """A point on the probability simplex over the label choices."""

    probs: np.ndarray

    def __init__(self, probs):
        arr = _as_float_vector(probs)
        if arr.size < 2:
            raise ValidationError("label distributions need at least 2 choices")
        if np.any(arr < 0):
            raise ValidationError("label distribution has negative entries")
        if abs(arr.sum() - 1.0) > SIMPLEX_ATOL:
            raise ValidationError(
                f"label distribution sums to {arr.sum()!r}, expected 1"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def d(self) -> int:
        return self.probs.size

    def __eq__(self, other):
        if not isinstance(other, LabelDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())


@dataclass(frozen=True)
class DataItem:
    """One post: id, optional text, feature vector, annotation counts."""

    id: str
    counts: np.ndarray
    features: Optional[np.ndarray] = None
    text: Optional[str] = None
    annotations: Optional[tuple] = None  # tuple of (annotator_id, label_index)

    def __init__(self, id, counts, features=None, text=None, annotations=None):
        counts_arr = np.asarray(counts)
        if counts_arr.ndim != 1:
            raise ValidationError(f"item {id!r}: counts must be a 1-d vector")
        if np.any(counts_arr < 0) or not np.all(counts_arr == counts_arr.astype(int)):
            raise ValidationError(f"item {id!r}: counts must be non-negative integers")
        counts_arr = counts_arr.astype(int)
        if counts_arr.sum() < 1:
            raise ValidationError(f"item {id!r}: all-zero annotation counts")
        counts_arr.setflags(write=False)

        feat_arr = None
        if features is not None:
            feat_arr = _as_float_vector(features)
            feat_arr.setflags(write=False)

        ann = None
        if annotations is not None:
            ann = tuple((str(a), int(l)) for a, l in annotations)
            hist = np.zeros(counts_arr.size, dtype=int)
            for _, label in ann:
                if not 0 <= label < counts_arr.size:
                    raise ValidationError(
                        f"item {id!r}: annotation label index {label} out of range"
                    )
                hist[label] += 1
            if not np.array_equal(hist, counts_arr):
                raise ValidationError(
                    f"item {id!r}: annotation histogram disagrees with counts"
                )

        object.__setattr__(self, "id", str(id))
        object.__setattr__(self, "counts", counts_arr)
        object.__setattr__(self, "features", feat_arr)
        object.__setattr__(self, "text", text)
        object.__setattr__(self, "annotations", ann)

    @property
    def n_annotations(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class Dataset:
    """A collection of items sharing label space and feature dimension."""

    items: tuple
    label_names: tuple
    split: Optional[str] = None

    def __init__(self, items: Sequence[DataItem], label_names: Sequence[str],
                 split: Optional[str] = None):
        items = tuple(items)
        label_names = tuple(str(n) for n in label_names)
        if len(label_names) < 2:
            raise ValidationError("need at least 2 label names")
        if split is not None and split not in ("train", "dev", "test"):
            raise ValidationError(f"unknown split tag {split!r}")
        seen = set()
        dims = None
        for item in items:
            if item.id in seen:
                raise ValidationError(f"duplicate item id {item.id!r}")
            seen.add(item.id)
            if item.counts.size != len(label_names):
                raise ValidationError(
                    f"item {item.id!r}: {item.counts.size} counts for "
                    f"{len(label_names)} labels"
                )
            if item.features is not None:
                if dims is None:
                    dims = item.features.size
                elif item.features.size != dims:
                    raise ValidationError(
                        f"item {item.id!r}: feature length {item.features.size} "
                        f"differs from {dims}"
                    )
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "label_names", label_names)
        object.__setattr__(self, "split", split)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def d(self) -> int:
        return len(self.label_names)

    @property
    def feature_dim(self) -> Optional[int]:
        for item in self.items:
            if item.features is not None:
                return item.features.size
        return None

    @property
    def ids(self) -> list:
        return [item.id for item in self.items]

    def feature_matrix(self) -> np.ndarray:
        rows = []
        for item in self.items:
            if item.features is None:
                raise ValidationError(f"item {item.id!r} has no features")
            rows.append(item.features)
        return np.asarray(rows, dtype=float)

    def label_matrix(self) -> np.ndarray:
        return np.asarray(
            [empirical_distribution(it).probs for it in self.items], dtype=float
        )

    def with_split(self, split: str) -> "Dataset":
        return Dataset(self.items, self.label_names, split=split)


@dataclass(frozen=True)
class PooledLabels:
    """Map item id -> pooled label distribution."""

    by_id: dict = field(default_factory=dict)

    def __init__(self, by_id):
        frozen = {}
        for item_id, dist in by_id.items():
            if not isinstance(dist, LabelDistribution):
                dist = LabelDistribution(dist)
            frozen[str(item_id)] = dist
        object.__setattr__(self, "by_id", frozen)

    def __getitem__(self, item_id: str) -> LabelDistribution:
        return self.by_id[item_id]

    def __len__(self) -> int:
        return len(self.by_id)

    def __iter__(self):
        return iter(self.by_id)

    def check_covers(self, ds: Dataset) -> None:
        ids = set(ds.ids)
        if ids != set(self.by_id):
            missing = sorted(ids - set(self.by_id))[:5]
            extra = sorted(set(self.by_id) - ids)[:5]
            raise ValidationError(
                f"pooled labels do not match dataset ids "
                f"(missing {missing}, extra {extra})"
            )


def empirical_distribution(item: DataItem) -> LabelDistribution:
    """Normalize an item's annotation counts into a distribution."""
    total = item.counts.sum()
    if total < 1:
        raise ValidationError(f"item {item.id!r}: all-zero annotation counts")
    return LabelDistribution(item.counts / total)


def item_entropy(y: LabelDistribution) -> float:
    """Shannon entropy in nats, with 0 * ln 0 := 0."""
    p = y.probs
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def dataset_mean_entropy(ds: Dataset) -> float:
    if len(ds) == 0:
        raise ValidationError("cannot take mean entropy of an empty dataset")
    return float(
        np.mean([item_entropy(empirical_distribution(it)) for it in ds.items])
    )
