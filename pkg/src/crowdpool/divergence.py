"""KL divergence with additive smoothing.

Empirical label distributions routinely contain exact zeros (a handful of
annotators per item), so KL is computed on smoothed copies
``(v + eps) / (1 + m * eps)``. Dimensions that are zero in *both* arguments
carry no information and are dropped before smoothing; this makes the KL of
two zero-padded vectors identical to the KL of their nonzero blocks, which
the mixing stage relies on (the w=0 case must reproduce label-only pooling
exactly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabelDistribution, ValidationError


@dataclass(frozen=True)
class SmoothingPolicy:
    epsilon: float = 1e-6

    def __post_init__(self):
        if not 0 < self.epsilon <= 1e-3:
            raise ValidationError(
                f"smoothing epsilon must be in (0, 1e-3], got {self.epsilon}"
            )


DEFAULT_SMOOTHING = SmoothingPolicy()


def _as_vector(v) -> np.ndarray:
    if isinstance(v, LabelDistribution):
        return v.probs
    return np.asarray(v, dtype=float)


def kl(p, q, s: SmoothingPolicy = DEFAULT_SMOOTHING) -> float:
    """Smoothed KL(p || q); first argument is the query/raw distribution."""
    p = _as_vector(p)
    q = _as_vector(q)
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {q.shape}")
    keep = (p != 0) | (q != 0)
    p = p[keep]
    q = q[keep]
    m = p.size
    z = 1.0 + m * s.epsilon
    pt = (p + s.epsilon) / z
    qt = (q + s.epsilon) / z
    return float(np.sum(pt * (np.log(pt) - np.log(qt))))


def mean_kl(pairs, s: SmoothingPolicy = DEFAULT_SMOOTHING) -> float:
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("mean_kl of an empty list")
    return float(np.mean([kl(p, q, s) for p, q in pairs]))


def kl_rows(P: np.ndarray, Q: np.ndarray,
            s: SmoothingPolicy = DEFAULT_SMOOTHING) -> np.ndarray:
    """Row-wise KL(P[i] || Q[i]); identical semantics to `kl` per row."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ValidationError(f"shape mismatch: {P.shape} vs {Q.shape}")
    eps = s.epsilon
    # Zero-zero dims contribute (eps) * log(eps/eps) = 0 to the raw sum, so
    # only the per-row normalizer needs the kept-dimension count.
    m = np.sum((P != 0) | (Q != 0), axis=1)
    raw = np.sum((P + eps) * (np.log(P + eps) - np.log(Q + eps)), axis=1)
    return raw / (1.0 + m * eps)


def kl_matrix(P: np.ndarray, Q: np.ndarray,
              s: SmoothingPolicy = DEFAULT_SMOOTHING) -> np.ndarray:
    """Pairwise KL(P[i] || Q[j]) as an (n, m) matrix, consistent with `kl`."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.ndim != 2 or Q.ndim != 2 or P.shape[1] != Q.shape[1]:
        raise ValidationError(f"incompatible shapes: {P.shape} vs {Q.shape}")
    eps = s.epsilon
    Pe = P + eps
    logPe = np.log(Pe)
    logQe = np.log(Q + eps)
    raw = np.sum(Pe * logPe, axis=1)[:, None] - Pe @ logQe.T
    # kept-dim counts: dims nonzero in p_i or q_j
    zp = (P == 0).astype(float)
    zq = (Q == 0).astype(float)
    m = P.shape[1] - zp @ zq.T
    return raw / (1.0 + m * eps)
