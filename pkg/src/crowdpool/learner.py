"""Stage-2 distributional learner: features -> label distribution.

Three architectures share one training loop: a linear softmax model, a
one-hidden-layer MLP (the default), and a 1-D CNN that treats the embedding
as a length-D single-channel sequence with three conv/max-pool blocks
followed by dropout and softmax. Training minimizes mean KL(target || pred)
with mini-batch Adam, early-stops on dev mean KL, and is bitwise
deterministic given the seed. All math is float64 numpy with hand-written
backprop, verified against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .core import LabelDistribution, ValidationError
from .divergence import kl

ARCHITECTURES = ("linear", "mlp", "conv1d")


class TrainingError(RuntimeError):
    pass


class GradientCheckError(AssertionError):
    pass


@dataclass
class LearnerConfig:
    architecture: str = "mlp"
    hidden_dim: int = 128
    dropout: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    conv_width: int = 5
    pool_width: int = 2
    loss: str = "kl"  # "kl" or "ce"; identical gradients, shifted value

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(f"unknown architecture {self.architecture!r}")
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)")
        if self.loss not in ("kl", "ce"):
            raise ValidationError(f"unknown loss {self.loss!r}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _glorot(rng, shape):
    fan_in = int(np.prod(shape[:-1]))
    limit = np.sqrt(6.0 / (fan_in + shape[-1]))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# conv1d pieces

def _conv_forward(x, W, b):
    # x: (B, Cin, L); W: (K, Cin, Cout) -> (B, Cout, L-K+1)
    K = W.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(x, K, axis=2)
    pre = np.einsum("bcLk,kco->boL", windows, W, optimize=True) + b[None, :, None]
    return pre, windows


def _conv_backward(dpre, windows, W, x_shape):
    K = W.shape[0]
    dW = np.einsum("bcLk,boL->kco", windows, dpre, optimize=True)
    db = dpre.sum(axis=(0, 2))
    dwin = np.einsum("boL,kco->bcLk", dpre, W, optimize=True)
    dx = np.zeros(x_shape)
    L_out = dpre.shape[2]
    for k in range(K):
        dx[:, :, k:k + L_out] += dwin[:, :, :, k]
    return dx, dW, db


def _maxpool_forward(x, width):
    B, C, L = x.shape
    L_p = L // width
    trimmed = x[:, :, : L_p * width].reshape(B, C, L_p, width)
    idx = trimmed.argmax(axis=3)
    out = np.take_along_axis(trimmed, idx[..., None], axis=3)[..., 0]
    return out, (idx, x.shape, width)


def _maxpool_backward(dout, cache):
    idx, x_shape, width = cache
    B, C, L = x_shape
    L_p = L // width
    dtrim = np.zeros((B, C, L_p, width))
    np.put_along_axis(dtrim, idx[..., None], dout[..., None], axis=3)
    dx = np.zeros(x_shape)
    dx[:, :, : L_p * width] = dtrim.reshape(B, C, L_p * width)
    return dx


# ---------------------------------------------------------------------------

class _Network:
    """Architecture-specific forward/backward over a dict of parameters."""

    def __init__(self, cfg: LearnerConfig, input_dim: int, n_labels: int):
        self.cfg = cfg
        self.D = input_dim
        self.d = n_labels
        if cfg.architecture == "conv1d":
            L = input_dim
            for _ in range(3):
                L = L - cfg.conv_width + 1
                if L < 1:
                    raise ValidationError(
                        f"input length {input_dim} too short for three "
                        f"width-{cfg.conv_width} conv blocks"
                    )
                L = max(L // cfg.pool_width, 1) if L >= cfg.pool_width else L
            self.final_len = L

    def init_params(self, rng) -> dict:
        cfg, D, d = self.cfg, self.D, self.d
        if cfg.architecture == "linear":
            return {"W": _glorot(rng, (D, d)), "b": np.zeros(d)}
        if cfg.architecture == "mlp":
            h = cfg.hidden_dim
            return {
                "W1": _glorot(rng, (D, h)), "b1": np.zeros(h),
                "W2": _glorot(rng, (h, d)), "b2": np.zeros(d),
            }
        K, C = cfg.conv_width, cfg.hidden_dim
        params = {}
        c_in = 1
        for i in range(3):
            params[f"convW{i}"] = _glorot(rng, (K, c_in, C))
            params[f"convb{i}"] = np.zeros(C)
            c_in = C
        params["W"] = _glorot(rng, (C, d))
        params["b"] = np.zeros(d)
        return params

    def forward(self, params, X, drop_mask=None):
        cfg = self.cfg
        cache = {"X": X, "drop_mask": drop_mask}
        if cfg.architecture == "linear":
            logits = X @ params["W"] + params["b"]
        elif cfg.architecture == "mlp":
            pre1 = X @ params["W1"] + params["b1"]
            h = np.maximum(pre1, 0.0)
            hd = h * drop_mask if drop_mask is not None else h
            logits = hd @ params["W2"] + params["b2"]
            cache.update(pre1=pre1, hd=hd)
        else:
            x = X[:, None, :]  # (B, 1, L)
            block_caches = []
            for i in range(3):
                pre, windows = _conv_forward(x, params[f"convW{i}"],
                                             params[f"convb{i}"])
                act = np.maximum(pre, 0.0)
                if act.shape[2] >= cfg.pool_width:
                    pooled, pcache = _maxpool_forward(act, cfg.pool_width)
                else:
                    pooled, pcache = act, None
                block_caches.append((x.shape, windows, pre, pcache))
                x = pooled
            gidx = x.argmax(axis=2)
            feat = np.take_along_axis(x, gidx[..., None], axis=2)[..., 0]
            featd = feat * drop_mask if drop_mask is not None else feat
            logits = featd @ params["W"] + params["b"]
            cache.update(block_caches=block_caches, last=x, gidx=gidx, featd=featd)
        return logits, cache

    def backward(self, params, cache, dlogits):
        cfg = self.cfg
        grads = {}
        X = cache["X"]
        drop_mask = cache["drop_mask"]
        if cfg.architecture == "linear":
            grads["W"] = X.T @ dlogits
            grads["b"] = dlogits.sum(axis=0)
            return grads
        if cfg.architecture == "mlp":
            grads["W2"] = cache["hd"].T @ dlogits
            grads["b2"] = dlogits.sum(axis=0)
            dhd = dlogits @ params["W2"].T
            dh = dhd * drop_mask if drop_mask is not None else dhd
            dpre1 = dh * (cache["pre1"] > 0)
            grads["W1"] = X.T @ dpre1
            grads["b1"] = dpre1.sum(axis=0)
            return grads
        grads["W"] = cache["featd"].T @ dlogits
        grads["b"] = dlogits.sum(axis=0)
        dfeatd = dlogits @ params["W"].T
        dfeat = dfeatd * drop_mask if drop_mask is not None else dfeatd
        x = cache["last"]
        dx = np.zeros_like(x)
        np.put_along_axis(dx, cache["gidx"][..., None], dfeat[..., None], axis=2)
        for i in reversed(range(3)):
            x_shape, windows, pre, pcache = cache["block_caches"][i]
            dact = _maxpool_backward(dx, pcache) if pcache is not None else dx
            dpre = dact * (pre > 0)
            dx, dW, db = _conv_backward(dpre, windows, params[f"convW{i}"], x_shape)
            grads[f"convW{i}"] = dW
            grads[f"convb{i}"] = db
        return grads


def _kl_loss_and_grad(logits, targets, loss_kind="kl"):
    """Mean KL(target || softmax(logits)); gradient (softmax - t) / B."""
    B = logits.shape[0]
    probs = _softmax(logits)
    log_probs = np.log(probs + 1e-300)
    ce = -np.sum(targets * log_probs) / B
    if loss_kind == "ce":
        loss = ce
    else:
        nz = targets > 0
        ent = -np.sum(targets[nz] * np.log(targets[nz])) / B
        loss = ce - ent
    return loss, (probs - targets) / B


@dataclass
class TrainedLearner:
    architecture: str
    params: dict
    config: LearnerConfig
    input_dim: int
    n_labels: int
    curve: list = field(default_factory=list)  # (epoch, train_loss, dev_kl)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ValidationError(
                f"feature length {X.shape[1]} != model input dim {self.input_dim}"
            )
        net = _Network(self.config, self.input_dim, self.n_labels)
        logits, _ = net.forward(self.params, X, drop_mask=None)
        probs = _softmax(logits)
        return probs / probs.sum(axis=1, keepdims=True)

    def save(self, path):
        meta = {
            "format": "learner-checkpoint/v1",
            "architecture": self.architecture,
            "config": asdict(self.config),
            "input_dim": self.input_dim,
            "n_labels": self.n_labels,
            "curve": self.curve,
        }
        np.savez(path, __meta__=json.dumps(meta), **self.params)

    @classmethod
    def load(cls, path) -> "TrainedLearner":
        archive = np.load(path, allow_pickle=False)
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("format") != "learner-checkpoint/v1":
            raise ValidationError("unsupported checkpoint format")
        params = {k: archive[k] for k in archive.files if k != "__meta__"}
        return cls(architecture=meta["architecture"], params=params,
                   config=LearnerConfig(**meta["config"]),
                   input_dim=meta["input_dim"], n_labels=meta["n_labels"],
                   curve=[tuple(row) for row in meta["curve"]])

    def save_curve_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,dev_mean_kl\n")
            for epoch, loss, dev_kl in self.curve:
                fh.write(f"{epoch},{loss},{dev_kl}\n")


def predict(model: TrainedLearner, features) -> LabelDistribution:
    probs = model.predict_proba(np.asarray(features, dtype=float))[0]
    return LabelDistribution(probs)


def _stack_pairs(pairs):
    X = np.asarray([np.asarray(x, dtype=float) for x, _ in pairs])
    Y = np.asarray([
        y.probs if isinstance(y, LabelDistribution) else np.asarray(y, dtype=float)
        for _, y in pairs
    ])
    return X, Y


def train(train_pairs, dev_pairs, cfg: LearnerConfig) -> TrainedLearner:
    """Mini-batch Adam on mean KL(target || prediction); early stopping
    restores the parameters with the best dev mean KL."""
    if not train_pairs:
        raise ValidationError("empty training set")
    X, Y = _stack_pairs(train_pairs)
    Xd, Yd = _stack_pairs(dev_pairs) if dev_pairs else (None, None)
    n, D = X.shape
    d = Y.shape[1]
    if Xd is not None and (Xd.shape[1] != D or Yd.shape[1] != d):
        raise ValidationError("train/dev dimension mismatch")

    net = _Network(cfg, D, d)
    rng = np.random.default_rng(cfg.seed)
    params = net.init_params(rng)
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v_) for k, v_ in params.items()}
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0

    def dev_mean_kl(p):
        model = TrainedLearner(cfg.architecture, p, cfg, D, d)
        probs = model.predict_proba(Xd)
        return float(np.mean([kl(Yd[i], probs[i]) for i in range(Xd.shape[0])]))

    best = None  # (dev_kl, params copy, epoch)
    curve = []
    bad_epochs = 0
    drop_dim = None
    if cfg.dropout > 0 and cfg.architecture in ("mlp", "conv1d"):
        drop_dim = cfg.hidden_dim

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xb, yb = X[batch], Y[batch]
            mask = None
            if drop_dim is not None:
                keep = rng.random((xb.shape[0], drop_dim)) >= cfg.dropout
                mask = keep / (1.0 - cfg.dropout)
            logits, cache = net.forward(params, xb, drop_mask=mask)
            loss, dlogits = _kl_loss_and_grad(logits, yb, cfg.loss)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step} "
                    f"(lr={cfg.learning_rate}); aborting"
                )
            losses.append(loss)
            grads = net.backward(params, cache, dlogits)
            step += 1
            for key in params:
                g = grads[key]
                m[key] = beta1 * m[key] + (1 - beta1) * g
                v[key] = beta2 * v[key] + (1 - beta2) * g * g
                m_hat = m[key] / (1 - beta1 ** step)
                v_hat = v[key] / (1 - beta2 ** step)
                params[key] = params[key] - cfg.learning_rate * m_hat / (
                    np.sqrt(v_hat) + adam_eps)

        train_loss = float(np.mean(losses))
        dev_kl = dev_mean_kl(params) if Xd is not None else train_loss
        curve.append((epoch, train_loss, dev_kl))
        if best is None or dev_kl < best[0]:
            best = (dev_kl, {k: p.copy() for k, p in params.items()}, epoch)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    final_params = best[1] if best is not None else params
    return TrainedLearner(cfg.architecture, final_params, cfg, D, d, curve=curve)


@dataclass
class GradientCheckReport:
    architecture: str
    max_rel_err: float
    worst_parameter: str
    per_tensor: dict


def gradient_check(cfg: LearnerConfig, tol: float,
                   input_dim: Optional[int] = None,
                   n_labels: int = 3, batch: int = 4,
                   h: float = 1e-5) -> GradientCheckReport:
    """Compare analytic gradients against central finite differences on a
    small random model and batch (double precision, dropout disabled)."""
    if input_dim is None:
        input_dim = 50 if cfg.architecture == "conv1d" else 7
    net = _Network(cfg, input_dim, n_labels)
    rng = np.random.default_rng(cfg.seed)
    params = net.init_params(rng)
    X = rng.normal(size=(batch, input_dim))
    Y = rng.dirichlet(np.ones(n_labels), size=batch)

    def loss_at(p):
        logits, _ = net.forward(p, X, drop_mask=None)
        loss, _ = _kl_loss_and_grad(logits, Y, cfg.loss)
        return loss

    logits, cache = net.forward(params, X, drop_mask=None)
    _, dlogits = _kl_loss_and_grad(logits, Y, cfg.loss)
    analytic = net.backward(params, cache, dlogits)

    per_tensor = {}
    worst = (0.0, "")
    for name, tensor in params.items():
        numeric = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_at(params)
            flat[i] = orig - h
            lo = loss_at(params)
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2 * h)
        ga, gn = analytic[name], numeric
        denom = np.maximum(np.abs(ga) + np.abs(gn), 1e-3)
        rel = float(np.max(np.abs(ga - gn) / denom))
        per_tensor[name] = rel
        if rel > worst[0]:
            worst = (rel, name)

    report = GradientCheckReport(cfg.architecture, worst[0], worst[1], per_tensor)
    if worst[0] >= tol:
        raise GradientCheckError(
            f"gradient check failed for {cfg.architecture}: parameter "
            f"{worst[1]!r} has max relative error {worst[0]:.3e} >= {tol}"
        )
    return report
