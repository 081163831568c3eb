"""Small feed-forward scorers for a binary child given binary parents.

:class:`Mlp` is the trainable network (sigmoid output unit).  :func:`to_step`
turns it into a :class:`StepNetwork`, whose hidden units fire iff their
pre-activation is ``>= 0`` and whose output is the raw affine value.  Step
networks evaluate their affine maps by left-to-right accumulation so that the
compiler and the MPE solver can reproduce every output bit-for-bit.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import FamilyView

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "sigmoid", "identity", "step")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


def sigmoid(a):
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def _act(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "sigmoid":
        return sigmoid(a)
    if name == "identity":
        return a
    if name == "step":
        return (a >= 0).astype(float)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class Layer:
    """Affine map ``a = w @ x + b`` followed by ``act``; ``w`` is (out, in)."""

    w: np.ndarray
    b: np.ndarray
    act: str

    def __post_init__(self):
        w = np.array(self.w, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float, ndmin=1)
        if w.shape[0] != b.shape[0]:
            raise ValueError("bias length must equal the number of layer outputs")
        if self.act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.act!r}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class Mlp:
    layers: tuple[Layer, ...]
    seed: int | None = None
    loss_curve: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.w.shape[0] != nxt.w.shape[1]:
                raise ValueError("consecutive layer dimensions disagree")
        if layers[-1].w.shape[0] != 1:
            raise ValueError("the network must have exactly one output unit")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "loss_curve", tuple(self.loss_curve))

    @property
    def n_inputs(self) -> int:
        return self.layers[0].w.shape[1]

    def logits(self, X) -> np.ndarray:
        h = np.asarray(X, dtype=float)
        for layer in self.layers[:-1]:
            h = _act(layer.act, h @ layer.w.T + layer.b)
        last = self.layers[-1]
        return (h @ last.w.T + last.b)[:, 0]

    def predict_proba(self, X) -> np.ndarray:
        """Pr(x=1 | u) for each row of ``X``."""
        return sigmoid(self.logits(X))

    def score(self, X) -> np.ndarray:
        """The value that contexts threshold: the output probability."""
        return self.predict_proba(X)

    # flat parameter vector, used by the optimizers and gradient checks
    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.w.ravel(), l.b]) for l in self.layers])

    def with_flat(self, theta) -> "Mlp":
        layers, pos = [], 0
        for l in self.layers:
            nw, nb = l.w.size, l.b.size
            w = theta[pos:pos + nw].reshape(l.w.shape)
            b = theta[pos + nw:pos + nw + nb]
            pos += nw + nb
            layers.append(Layer(w, b, l.act))
        return type(self)(tuple(layers), self.seed, self.loss_curve)

    def to_json(self) -> dict:
        return {
            "layers": [{"w": l.w.tolist(), "b": l.b.tolist(), "act": l.act} for l in self.layers],
            "seed": self.seed,
            "loss_curve": list(self.loss_curve),
        }


class StepNetwork(Mlp):
    """Hard-threshold network: step hidden units, raw affine output."""

    def __post_init__(self):
        super().__post_init__()
        if any(l.act != "step" for l in self.layers[:-1]) or self.layers[-1].act != "identity":
            raise ValueError("step networks need step hidden units and an identity output")

    def hidden(self, X) -> np.ndarray:
        """0/1 activations of the last hidden layer, shape (n, units)."""
        h = np.asarray(X, dtype=float)
        for layer in self.layers[:-1]:
            h = (_sequential_affine(h, layer.w, layer.b) >= 0).astype(float)
        return h

    def output(self, X) -> np.ndarray:
        last = self.layers[-1]
        return _sequential_affine(self.hidden(X), last.w, last.b)[:, 0]

    def logits(self, X) -> np.ndarray:
        return self.output(X)

    def score(self, X) -> np.ndarray:
        return self.output(X)

    def output_one(self, u) -> float:
        """Scalar forward pass with the same float semantics as :meth:`output`."""
        h = [float(v) for v in u]
        for layer in self.layers[:-1]:
            h = [1.0 if a >= 0 else 0.0 for a in _sequential_affine_one(h, layer.w, layer.b)]
        return _sequential_affine_one(h, self.layers[-1].w, self.layers[-1].b)[0]


def _sequential_affine(X, W, b) -> np.ndarray:
    # b + sum_i W[:, i] * x_i accumulated in index order, skipping zero inputs
    acc = np.tile(b, (X.shape[0], 1))
    for i in range(W.shape[1]):
        on = X[:, i] != 0
        if on.any():
            acc[on] = acc[on] + X[on, i:i + 1] * W[:, i]
    return acc


def _sequential_affine_one(x, W, b) -> list[float]:
    rows = W.tolist()
    out = []
    for row, bias in zip(rows, b.tolist()):
        acc = bias
        for wi, xi in zip(row, x):
            if xi != 0:
                acc = acc + wi * xi
        out.append(acc)
    return out


def to_step(net: Mlp) -> StepNetwork:
    """Replace hidden activations by steps at 0 and expose the output pre-activation."""
    layers = [Layer(l.w, l.b, "step") for l in net.layers[:-1]]
    last = net.layers[-1]
    layers.append(Layer(last.w, last.b, "identity"))
    return StepNetwork(tuple(layers), net.seed, net.loss_curve)


def eval(net: Mlp, u) -> float:  # noqa: A001 - public operation name
    """Pr(x=1 | u) for a single parent assignment."""
    u = np.asarray(u, dtype=float)
    if u.shape != (net.n_inputs,):
        raise ValueError(f"expected {net.n_inputs} inputs, got shape {u.shape}")
    return float(sigmoid(net.logits(u[None, :]))[0])


def cross_entropy(net: Mlp, X, y, w=None) -> float:
    """Weighted mean binary cross-entropy of the sigmoid output."""
    z = net.logits(X)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    losses = np.logaddexp(0.0, z) - y * z
    return float(np.dot(w, losses) / w.sum())


def gradient(net: Mlp, X, y, w=None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradient of :func:`cross_entropy`, as ``(dW, db)`` per layer."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    pre, post = [], [X]
    h = X
    for layer in net.layers:
        a = h @ layer.w.T + layer.b
        pre.append(a)
        h = _act(layer.act, a) if layer is not net.layers[-1] else a
        post.append(h)
    # d(loss)/d(logit) for the sigmoid + cross-entropy pair
    delta = ((sigmoid(pre[-1][:, 0]) - y) * (w / w.sum()))[:, None]
    grads = []
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        grads.append((delta.T @ post[idx], delta.sum(axis=0)))
        if idx == 0:
            break
        back = delta @ layer.w
        prev = net.layers[idx - 1]
        a = pre[idx - 1]
        if prev.act == "relu":
            back = back * (a > 0)
        elif prev.act == "sigmoid":
            s = post[idx]
            back = back * s * (1.0 - s)
        elif prev.act == "step":
            back = back * 0.0
        delta = back
    return grads[::-1]


def flat_gradient(net: Mlp, X, y, w=None) -> np.ndarray:
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in gradient(net, X, y, w)])


@dataclass(frozen=True)
class TrainConfig:
    hidden_units: int = 16
    hidden_activation: str = "relu"
    epochs: int = 100
    learning_rate: float = 0.05
    batch_size: int | None = 64
    seed: int = 0
    optimizer: str = "momentum"
    momentum: float = 0.9

    def __post_init__(self):
        if self.hidden_units < 1 or self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("hidden_units, epochs and learning_rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.hidden_activation not in ("relu", "sigmoid"):
            raise ValueError("hidden activation must be relu or sigmoid")
        if self.optimizer not in ("momentum", "adam"):
            raise ValueError("optimizer must be 'momentum' or 'adam'")


def init_mlp(n_inputs: int, hidden: int, activation: str, rng) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    layers = []
    for fan_in, fan_out, act in ((n_inputs, hidden, activation), (hidden, 1, "sigmoid")):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-lim, lim, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return Mlp(tuple(layers))


def _compress(X, y, w):
    """Merge duplicate (u, x) rows, summing their weights."""
    rows = np.column_stack([X, y]).astype(np.uint8)
    uniq, inv = np.unique(rows, axis=0, return_inverse=True)
    counts = np.bincount(inv.ravel(), weights=w)
    return uniq[:, :-1].astype(float), uniq[:, -1].astype(float), counts


def train_arrays(X, y, w, cfg: TrainConfig) -> Mlp:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    net = init_mlp(X.shape[1], cfg.hidden_units, cfg.hidden_activation, rng)
    full_batch = cfg.batch_size is None or cfg.batch_size >= X.shape[0]
    if full_batch:
        # identical full-batch gradient on far fewer rows
        X, y, w = _compress(X, y, w)
    n = X.shape[0]
    theta = net.get_flat()
    vel = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    step = 0
    best_loss, best_theta = np.inf, theta.copy()
    curve = []
    for epoch in range(1, cfg.epochs + 1):
        order = np.arange(n) if full_batch else rng.permutation(n)
        bs = n if full_batch else cfg.batch_size
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            g = flat_gradient(net, X[idx], y[idx], w[idx])
            step += 1
            if cfg.optimizer == "momentum":
                vel = cfg.momentum * vel - cfg.learning_rate * g
                theta = theta + vel
            else:
                vel = 0.9 * vel + 0.1 * g
                m2 = 0.999 * m2 + 0.001 * g * g
                vhat = vel / (1 - 0.9 ** step)
                mhat = m2 / (1 - 0.999 ** step)
                theta = theta - cfg.learning_rate * vhat / (np.sqrt(mhat) + 1e-8)
            net = net.with_flat(theta)
        loss = cross_entropy(net, X, y, w)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise TrainingDivergedError(epoch)
        curve.append(loss)
        if loss < best_loss:
            best_loss, best_theta = loss, theta.copy()
    logger.debug("trained %d epochs, best loss %.5f", cfg.epochs, best_loss)
    best = net.with_flat(best_theta)
    return Mlp(best.layers, cfg.seed, tuple(curve))


def train(view: FamilyView, cfg: TrainConfig) -> Mlp:
    """Fit an MLP scorer for the family's child; returns the best-loss snapshot."""
    return train_arrays(view.X, view.y, view.w, cfg)


def from_json(obj: dict) -> Mlp:
    layers = tuple(Layer(np.array(l["w"], dtype=float), np.array(l["b"], dtype=float), l["act"])
                   for l in obj["layers"])
    cls = StepNetwork if layers[-1].act == "identity" and all(l.act == "step" for l in layers[:-1]) else Mlp
    return cls(layers, obj.get("seed"), tuple(obj.get("loss_curve", ())))


def save_model(net: Mlp, path) -> None:
    Path(path).write_text(json.dumps(net.to_json()))


def load_model(path) -> Mlp:
    return from_json(json.loads(Path(path).read_text()))



class MLPScorer(ClassifierMixin, BaseEstimator):
    """scikit-learn style wrapper around :func:`train_arrays`."""

    def __init__(self, hidden_units=16, activation="relu", epochs=100, learning_rate=0.05,
                 batch_size=64, optimizer="momentum", seed=0):
        self.hidden_units = hidden_units
        self.activation = activation
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.seed = seed

    def fit(self, X, y, sample_weight=None):
        from .validation import check_family_arrays

        view = check_family_arrays(X, y, sample_weight)
        cfg = TrainConfig(self.hidden_units, self.activation, self.epochs, self.learning_rate,
                          self.batch_size, self.seed, self.optimizer)
        self.net_ = train(view, cfg)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = len(view.parents)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        return self.net_.logits(np.asarray(X, dtype=float))

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        p1 = self.net_.predict_proba(np.asarray(X, dtype=float))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def to_step(self) -> StepNetwork:
        check_is_fitted(self, "net_")
        return to_step(self.net_)
