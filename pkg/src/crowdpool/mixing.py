"""Weighted joint feature/label representation.

Each item is embedded as the concatenation ``(w * x, (1 - w) * y)``. Euclidean
clustering methods consume that raw vector; KL-based methods need a valid
distribution, so the feature block is first mapped onto the simplex with a
min-shift + epsilon + L1-normalization transform fitted on the train split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, LabelDistribution, ValidationError


@dataclass(frozen=True)
class FeatureSimplexTransform:
    """Order-preserving map from raw feature vectors to L1-normalizable mass."""

    minimum: np.ndarray
    epsilon: float = 1e-6

    def __post_init__(self):
        arr = np.asarray(self.minimum, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "minimum", arr)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.minimum.size:
            raise ValidationError(
                f"feature length {x.shape[-1]} != transform dim {self.minimum.size}"
            )
        # out-of-train values below the per-dim minimum clamp to epsilon
        return np.maximum(x - self.minimum, 0.0) + self.epsilon

    def normalized(self, x: np.ndarray) -> np.ndarray:
        t = self(x)
        return t / np.sum(t, axis=-1, keepdims=True)


def fit_feature_transform(train: Dataset, epsilon: float = 1e-6) -> FeatureSimplexTransform:
    if len(train) == 0:
        raise ValidationError("cannot fit feature transform on an empty split")
    X = train.feature_matrix()
    return FeatureSimplexTransform(minimum=X.min(axis=0), epsilon=epsilon)


@dataclass(frozen=True)
class MixedPoint:
    raw: np.ndarray
    simplex: np.ndarray
    w: float
    label_dim: int

    @property
    def feature_dim(self) -> int:
        return self.raw.size - self.label_dim

    @property
    def feature_block(self) -> np.ndarray:
        return self.simplex[: self.feature_dim]

    @property
    def label_block(self) -> np.ndarray:
        return self.simplex[self.feature_dim:]


def mix(x: np.ndarray, y, w: float, t: FeatureSimplexTransform) -> MixedPoint:
    """Build the weighted concatenation and its simplex projection."""
    if not 0.0 <= w <= 1.0:
        raise ValidationError(f"mixing weight must be in [0, 1], got {w}")
    x = np.asarray(x, dtype=float)
    yv = y.probs if isinstance(y, LabelDistribution) else np.asarray(y, dtype=float)
    raw = np.concatenate([w * x, (1.0 - w) * yv])
    simplex = np.concatenate([w * t.normalized(x), (1.0 - w) * yv])
    return MixedPoint(raw=raw, simplex=simplex, w=w, label_dim=yv.size)


def mixed_matrices(ds: Dataset, w: float, t: FeatureSimplexTransform):
    """Raw and simplex mixed vectors for a whole split, row per item."""
    if not 0.0 <= w <= 1.0:
        raise ValidationError(f"mixing weight must be in [0, 1], got {w}")
    X = ds.feature_matrix()
    Y = ds.label_matrix()
    raw = np.concatenate([w * X, (1.0 - w) * Y], axis=1)
    simplex = np.concatenate([w * t.normalized(X), (1.0 - w) * Y], axis=1)
    return raw, simplex


W_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
