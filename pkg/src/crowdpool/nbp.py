"""Neighborhood-based pooling: average labels over all items inside a KL
ball of radius r around each item, in the mixed simplex space.

Neighborhoods are reflexive (an item always belongs to its own neighborhood,
so r=0 reproduces the raw distributions) but not symmetric, since KL is not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, PooledLabels, ValidationError
from .divergence import DEFAULT_SMOOTHING, SmoothingPolicy, kl_matrix, kl_rows
from .mixing import FeatureSimplexTransform, mixed_matrices

R_MIN, R_MAX = 0.0, 15.0


@dataclass(frozen=True)
class NbpConfig:
    r: float
    w: float
    smoothing: SmoothingPolicy = field(default_factory=SmoothingPolicy)

    def __post_init__(self):
        if not R_MIN <= self.r <= R_MAX:
            raise ValidationError(f"radius must be in [{R_MIN}, {R_MAX}], got {self.r}")
        if not 0.0 <= self.w <= 1.0:
            raise ValidationError(f"mixing weight must be in [0, 1], got {self.w}")


def pairwise_kl(ds: Dataset, w: float, t: FeatureSimplexTransform,
                s: SmoothingPolicy = DEFAULT_SMOOTHING) -> np.ndarray:
    """KL(simplex_i || simplex_j) for every ordered pair; query comes first."""
    _, simplex = mixed_matrices(ds, w, t)
    return kl_matrix(simplex, simplex, s)


def _neighborhood_mask(klmat: np.ndarray, r: float) -> np.ndarray:
    mask = klmat < r  # strict inequality, per the ball definition
    np.fill_diagonal(mask, True)  # self-inclusion keeps neighborhoods non-empty
    return mask


def pool_from_kl(klmat: np.ndarray, Y: np.ndarray, r: float) -> np.ndarray:
    mask = _neighborhood_mask(klmat, r).astype(float)
    pooled = mask @ Y / mask.sum(axis=1, keepdims=True)
    return pooled


def nbp_pool(ds: Dataset, cfg: NbpConfig, t: FeatureSimplexTransform,
             klmat: np.ndarray = None) -> PooledLabels:
    if klmat is None:
        klmat = pairwise_kl(ds, cfg.w, t, cfg.smoothing)
    Y = ds.label_matrix()
    if cfg.r == 0.0:
        pooled = Y  # neighborhood is exactly the item itself
    else:
        pooled = pool_from_kl(klmat, Y, cfg.r)
        pooled = pooled / pooled.sum(axis=1, keepdims=True)
    ids = ds.ids
    return PooledLabels({ids[i]: pooled[i] for i in range(len(ids))})


def nbp_stage1_score(ds: Dataset, cfg: NbpConfig, t: FeatureSimplexTransform,
                     klmat: np.ndarray = None) -> float:
    """Mean KL between each raw mixed vector and its pooled mixed vector."""
    if klmat is None:
        klmat = pairwise_kl(ds, cfg.w, t, cfg.smoothing)
    _, simplex = mixed_matrices(ds, cfg.w, t)
    Y = ds.label_matrix()
    if cfg.r == 0.0:
        pooled_y = Y
    else:
        pooled_y = pool_from_kl(klmat, Y, cfg.r)
    X = ds.feature_matrix()
    pooled_simplex = np.concatenate(
        [cfg.w * t.normalized(X), (1.0 - cfg.w) * pooled_y], axis=1
    )
    return float(np.mean(kl_rows(simplex, pooled_simplex, cfg.smoothing)))
