"""Stage-1 clustering models: K-Means, diagonal GMM, multinomial mixture
(FMM), and collapsed-Gibbs LDA, all over mixed feature/label vectors.

Every fit is deterministic given (inputs, seed), assigns each item to exactly
one cluster (argmax responsibility / topic, ties to the lowest index), and the
EM-based models assert a non-decreasing objective on every iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Dataset, PooledLabels, ValidationError, empirical_distribution

P_MIN, P_MAX = 4, 40

METHODS = ("kmeans", "gmm", "fmm", "lda")


class DegenerateInputError(ValidationError):
    pass


@dataclass
class FmmPriors:
    cluster_concentration: float = 75.0
    label_concentration: float = 0.1
    pseudocount_scale: int = 100

    def __post_init__(self):
        if self.cluster_concentration <= 0 or self.label_concentration <= 0:
            raise ValidationError("Dirichlet concentrations must be positive")
        if self.pseudocount_scale < 1:
            raise ValidationError("pseudocount scale must be a positive integer")


@dataclass
class ClusterModel:
    method: str
    p: int
    w: Optional[float]
    seed: int
    parameters: dict
    assignments: dict  # item id -> cluster index
    cluster_label_means: Optional[np.ndarray] = None
    objective_trace: list = field(default_factory=list)

    FORMAT = "cluster-model/v1"

    def to_json(self) -> str:
        def enc(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v

        doc = {
            "format": self.FORMAT,
            "method": self.method,
            "p": self.p,
            "w": self.w,
            "seed": self.seed,
            "parameters": {k: enc(v) for k, v in self.parameters.items()},
            "assignments": {k: int(v) for k, v in self.assignments.items()},
            "cluster_label_means": enc(self.cluster_label_means),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        doc = json.loads(text)
        if doc.get("format") != cls.FORMAT:
            raise ValidationError(f"unsupported model format {doc.get('format')!r}")
        params = {
            k: (np.asarray(v, dtype=float) if isinstance(v, list) else v)
            for k, v in doc["parameters"].items()
        }
        means = doc.get("cluster_label_means")
        return cls(
            method=doc["method"],
            p=int(doc["p"]),
            w=doc["w"],
            seed=int(doc["seed"]),
            parameters=params,
            assignments={k: int(v) for k, v in doc["assignments"].items()},
            cluster_label_means=None if means is None else np.asarray(means),
        )


def _check_inputs(X: np.ndarray, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"expected a 2-d point matrix, got shape {X.shape}")
    if p < 1:
        raise ValidationError(f"cluster count must be positive, got {p}")
    if p > X.shape[0]:
        raise ValidationError(f"p={p} exceeds number of points n={X.shape[0]}")
    return X


def _ids_or_default(ids, n):
    if ids is None:
        return [str(i) for i in range(n)]
    ids = [str(i) for i in ids]
    if len(ids) != n:
        raise ValidationError(f"{len(ids)} ids for {n} points")
    return ids


# ---------------------------------------------------------------------------
# K-Means

def _kmeans_pp_init(X: np.ndarray, p: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((p, X.shape[1]))
    idx = rng.integers(n)
    centers[0] = X[idx]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, p):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[k] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[k]) ** 2, axis=1))
    return centers


def _lloyd(X, centers, max_iter=300, tol=1e-6):
    for _ in range(max_iter):
        d2 = (
            np.sum(X ** 2, axis=1)[:, None]
            - 2.0 * X @ centers.T
            + np.sum(centers ** 2, axis=1)[None, :]
        )
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for k in range(centers.shape[0]):
            members = X[labels == k]
            if members.shape[0] == 0:
                # re-seed an empty cluster at the point farthest from its center
                far = np.argmax(np.min(d2, axis=1))
                new_centers[k] = X[far]
            else:
                new_centers[k] = members.mean(axis=0)
        shift = np.max(np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)))
        centers = new_centers
        if shift < tol:
            break
    # final assignment against converged centers (argmin ties -> lowest index)
    d2 = (
        np.sum(X ** 2, axis=1)[:, None]
        - 2.0 * X @ centers.T
        + np.sum(centers ** 2, axis=1)[None, :]
    )
    labels = np.argmin(d2, axis=1)
    inertia = float(np.sum((X - centers[labels]) ** 2))
    return centers, labels, inertia


def fit_kmeans(points, p: int, seed: int, *, w=None, ids=None,
               n_restarts: int = 10) -> ClusterModel:
    """Lloyd's algorithm with k-means++ init and restarts; best by inertia."""
    X = _check_inputs(points, p)
    ids = _ids_or_default(ids, X.shape[0])
    rng = np.random.default_rng(seed)
    best = None
    restart_inertias = []
    for _ in range(n_restarts):
        centers0 = _kmeans_pp_init(X, p, rng)
        centers, labels, inertia = _lloyd(X, centers0)
        restart_inertias.append(inertia)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    centers, labels, inertia = best
    return ClusterModel(
        method="kmeans", p=p, w=w, seed=seed,
        parameters={"centroids": centers, "inertia": inertia,
                    "restart_inertias": restart_inertias},
        assignments={ids[i]: int(labels[i]) for i in range(len(ids))},
    )


# ---------------------------------------------------------------------------
# Diagonal-covariance GMM

_VAR_FLOOR = 1e-6


def _gmm_log_prob(X, means, variances, weights):
    # (n, p) log densities + log weights
    n, D = X.shape
    log_det = np.sum(np.log(variances), axis=1)  # (p,)
    quad = (
        (X ** 2) @ (1.0 / variances).T
        - 2.0 * X @ (means / variances).T
        + np.sum(means ** 2 / variances, axis=1)[None, :]
    )
    log_pdf = -0.5 * (D * np.log(2 * np.pi) + log_det[None, :] + quad)
    return log_pdf + np.log(weights)[None, :]


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


def fit_gmm(points, p: int, seed: int, *, w=None, ids=None,
            max_iter: int = 500, tol: float = 1e-6) -> ClusterModel:
    """EM for a diagonal-covariance Gaussian mixture, k-means init."""
    X = _check_inputs(points, p)
    if np.all(X == X[0]):
        raise DegenerateInputError("all points identical; GMM fit is degenerate")
    ids = _ids_or_default(ids, X.shape[0])
    n, D = X.shape

    init = fit_kmeans(X, p, seed, n_restarts=1)
    centers = init.parameters["centroids"]
    labels0 = np.array([init.assignments[str(i)] for i in range(n)])

    means = centers.copy()
    variances = np.empty((p, D))
    weights = np.empty(p)
    for k in range(p):
        members = X[labels0 == k]
        if members.shape[0] == 0:
            members = X
        variances[k] = np.maximum(members.var(axis=0), _VAR_FLOOR)
        weights[k] = max(members.shape[0], 1) / n
    weights /= weights.sum()

    trace = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_joint = _gmm_log_prob(X, means, variances, weights)
        log_norm = _logsumexp(log_joint, axis=1)
        ll = float(np.sum(log_norm))
        if trace:
            assert ll >= trace[-1] - 1e-7 * max(1.0, abs(trace[-1])), (
                f"GMM log-likelihood decreased: {trace[-1]} -> {ll}"
            )
        trace.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])

        nk = resp.sum(axis=0)
        weights = nk / n
        means = (resp.T @ X) / np.maximum(nk[:, None], 1e-300)
        ex2 = (resp.T @ (X ** 2)) / np.maximum(nk[:, None], 1e-300)
        variances = np.maximum(ex2 - means ** 2, _VAR_FLOOR)

        if prev_ll > -np.inf and abs(ll - prev_ll) < tol * max(1.0, abs(prev_ll)):
            break
        prev_ll = ll

    log_joint = _gmm_log_prob(X, means, variances, weights)
    labels = np.argmax(log_joint, axis=1)
    return ClusterModel(
        method="gmm", p=p, w=w, seed=seed,
        parameters={"means": means, "variances": variances, "weights": weights},
        assignments={ids[i]: int(labels[i]) for i in range(len(ids))},
        objective_trace=trace,
    )


# ---------------------------------------------------------------------------
# Finite multinomial mixture with Dirichlet priors

def simplex_to_pseudocounts(simplex: np.ndarray, scale) -> np.ndarray:
    """Round scale * simplex to integer pseudo-counts, row-wise scale."""
    simplex = np.asarray(simplex, dtype=float)
    scale = np.asarray(scale)
    counts = np.rint(simplex * scale[:, None]).astype(int)
    bad = np.where(counts.sum(axis=1) == 0)[0]
    if bad.size:
        raise DegenerateInputError(
            f"zero pseudo-count vector for row(s) {bad[:5].tolist()} "
            f"(scale too small for the mass spread)"
        )
    return counts


def fit_fmm(points, p: int, seed: int, priors: FmmPriors = FmmPriors(), *,
            w=None, ids=None, scale=None, max_iter: int = 500,
            tol: float = 1e-6) -> ClusterModel:
    """EM for a multinomial mixture over pseudo-counts with posterior-mean
    (Dirichlet) parameter updates.

    `scale` is the per-item pseudo-count total: the item's annotation count
    when known, else the priors' fallback scale.
    """
    X = _check_inputs(points, p)
    ids = _ids_or_default(ids, X.shape[0])
    n, M = X.shape
    if scale is None:
        scale = np.full(n, priors.pseudocount_scale)
    else:
        scale = np.asarray(scale)
        if scale.shape != (n,):
            raise ValidationError(f"scale must have shape ({n},)")
    C = simplex_to_pseudocounts(X, scale).astype(float)
    totals = C.sum(axis=1)

    g_c = priors.cluster_concentration
    g_l = priors.label_concentration

    rng = np.random.default_rng(seed)
    resp = rng.dirichlet(np.ones(p), size=n)

    def m_step(resp):
        nk = resp.sum(axis=0)
        pi = (nk + g_c) / (n + p * g_c)
        theta_num = resp.T @ C + g_l
        theta = theta_num / theta_num.sum(axis=1, keepdims=True)
        return pi, theta

    def objective(pi, theta):
        log_joint = np.log(pi)[None, :] + C @ np.log(theta).T
        ll = float(np.sum(_logsumexp(log_joint, axis=1)))
        # posterior-mean updates are the MAP/EM updates for concentration
        # gamma + 1, so the monotone objective carries gamma * log(param)
        prior = g_c * float(np.sum(np.log(pi))) + g_l * float(np.sum(np.log(theta)))
        return ll + prior, log_joint

    pi, theta = m_step(resp)
    trace = []
    prev = -np.inf
    for _ in range(max_iter):
        obj, log_joint = objective(pi, theta)
        if trace:
            assert obj >= trace[-1] - 1e-7 * max(1.0, abs(trace[-1])), (
                f"FMM objective decreased: {trace[-1]} -> {obj}"
            )
        trace.append(obj)
        log_norm = _logsumexp(log_joint, axis=1)
        resp = np.exp(log_joint - log_norm[:, None])
        pi, theta = m_step(resp)
        if prev > -np.inf and abs(obj - prev) < tol * max(1.0, abs(prev)):
            break
        prev = obj

    _, log_joint = objective(pi, theta)
    labels = np.argmax(log_joint, axis=1)
    return ClusterModel(
        method="fmm", p=p, w=w, seed=seed,
        parameters={"weights": pi, "theta": theta},
        assignments={ids[i]: int(labels[i]) for i in range(len(ids))},
        objective_trace=trace,
    )


# ---------------------------------------------------------------------------
# LDA via collapsed Gibbs sampling

_LDA_GRANULARITY = 1000
_LDA_SWEEPS = 200
_LDA_BETA = 0.01

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(f):
            return f
        return wrap if not (len(a) == 1 and callable(a[0])) else a[0]


@njit(cache=True)
def _gibbs_sweeps(doc_of, word_of, z, ndk, nkw, nk, alpha, beta,
                  n_sweeps, seed):  # pragma: no cover - jit compiled
    np.random.seed(seed)
    n_tokens = z.shape[0]
    p = ndk.shape[1]
    V = nkw.shape[1]
    probs = np.empty(p)
    for _ in range(n_sweeps):
        for t in range(n_tokens):
            d = doc_of[t]
            v = word_of[t]
            k = z[t]
            ndk[d, k] -= 1
            nkw[k, v] -= 1
            nk[k] -= 1
            total = 0.0
            for j in range(p):
                pr = (ndk[d, j] + alpha) * (nkw[j, v] + beta) / (nk[j] + V * beta)
                probs[j] = pr
                total += pr
            u = np.random.random() * total
            acc = 0.0
            k_new = p - 1
            for j in range(p):
                acc += probs[j]
                if u < acc:
                    k_new = j
                    break
            z[t] = k_new
            ndk[d, k_new] += 1
            nkw[k_new, v] += 1
            nk[k_new] += 1


def discretize_simplex(simplex: np.ndarray,
                       granularity: int = _LDA_GRANULARITY) -> np.ndarray:
    counts = np.rint(np.asarray(simplex, dtype=float) * granularity).astype(int)
    counts[counts < 0] = 0
    bad = np.where(counts.sum(axis=1) == 0)[0]
    if bad.size:
        raise DegenerateInputError(
            f"all-zero discretized document for row(s) {bad[:5].tolist()}"
        )
    return counts


def fit_lda(points, p: int, seed: int, *, w=None, ids=None,
            n_sweeps: int = _LDA_SWEEPS) -> ClusterModel:
    """Collapsed Gibbs LDA over simplex vectors discretized at 1/1000."""
    X = _check_inputs(points, p)
    ids = _ids_or_default(ids, X.shape[0])
    n, V = X.shape
    counts = discretize_simplex(X)

    docs, words = np.nonzero(counts)
    reps = counts[docs, words]
    doc_of = np.repeat(docs, reps).astype(np.int64)
    word_of = np.repeat(words, reps).astype(np.int64)
    n_tokens = doc_of.size

    rng = np.random.default_rng(seed)
    z = rng.integers(0, p, size=n_tokens).astype(np.int64)
    ndk = np.zeros((n, p), dtype=np.int64)
    nkw = np.zeros((p, V), dtype=np.int64)
    nk = np.zeros(p, dtype=np.int64)
    np.add.at(ndk, (doc_of, z), 1)
    np.add.at(nkw, (z, word_of), 1)
    np.add.at(nk, z, 1)
    nd = ndk.sum(axis=1)

    alpha = 1.0 / p
    beta = _LDA_BETA
    if p > 1 and n_tokens > 0:
        _gibbs_sweeps(doc_of, word_of, z, ndk, nkw, nk, alpha, beta,
                      n_sweeps, int(np.uint32(seed)))

    doc_topic = (ndk + alpha) / (nd[:, None] + p * alpha)
    topic_word = (nkw + beta) / (nk[:, None] + V * beta)
    labels = np.argmax(doc_topic, axis=1)
    return ClusterModel(
        method="lda", p=p, w=w, seed=seed,
        parameters={"doc_topic": doc_topic, "topic_word": topic_word},
        assignments={ids[i]: int(labels[i]) for i in range(len(ids))},
    )


# ---------------------------------------------------------------------------

def pooled_labels(model: ClusterModel, ds: Dataset) -> PooledLabels:
    """Cluster-mean empirical distributions, regardless of w."""
    Y = ds.label_matrix()
    ids = ds.ids
    missing = [i for i in ids if i not in model.assignments]
    if missing:
        raise ValidationError(f"items not assigned to any cluster: {missing[:5]}")
    labels = np.array([model.assignments[i] for i in ids])
    means = np.zeros((model.p, ds.d))
    for k in range(model.p):
        members = Y[labels == k]
        if members.shape[0]:
            means[k] = members.mean(axis=0)
            means[k] /= means[k].sum()  # guard float drift off the simplex
    model.cluster_label_means = means
    return PooledLabels({ids[i]: means[labels[i]] for i in range(len(ids))})


_FITTERS = {"kmeans": fit_kmeans, "gmm": fit_gmm, "fmm": fit_fmm, "lda": fit_lda}


def fit_cluster_model(method: str, raw: np.ndarray, simplex: np.ndarray,
                      p: int, seed: int, *, w=None, ids=None,
                      scale=None, priors: FmmPriors = FmmPriors()) -> ClusterModel:
    """Dispatch to the right fitter with its preferred representation.

    Euclidean methods (kmeans, gmm) cluster on the raw weighted concatenation;
    distribution-based methods (fmm, lda) use the simplex projection.
    """
    if method == "kmeans":
        return fit_kmeans(raw, p, seed, w=w, ids=ids)
    if method == "gmm":
        return fit_gmm(raw, p, seed, w=w, ids=ids)
    if method == "fmm":
        return fit_fmm(simplex, p, seed, priors, w=w, ids=ids, scale=scale)
    if method == "lda":
        return fit_lda(simplex, p, seed, w=w, ids=ids)
    raise ValidationError(f"unknown clustering method {method!r}")
