"""Two-stage pipeline for learning from crowd label distributions: pool
similar items in a weighted feature/label space, then train a distributional
classifier on the pooled soft labels."""

from .core import (
    DataItem,
    Dataset,
    LabelDistribution,
    PooledLabels,
    ValidationError,
    dataset_mean_entropy,
    empirical_distribution,
    item_entropy,
)
from .divergence import SmoothingPolicy, kl, mean_kl
from .mixing import FeatureSimplexTransform, MixedPoint, fit_feature_transform, mix

__all__ = [
    "DataItem",
    "Dataset",
    "LabelDistribution",
    "PooledLabels",
    "ValidationError",
    "dataset_mean_entropy",
    "empirical_distribution",
    "item_entropy",
    "SmoothingPolicy",
    "kl",
    "mean_kl",
    "FeatureSimplexTransform",
    "MixedPoint",
    "fit_feature_transform",
    "mix",
]

__version__ = "0.1.0"
