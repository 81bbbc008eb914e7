"""Two-hidden-layer feedforward classifier trained on normalized windows.

Architecture: ``input -> leaky ReLU(h1) -> leaky ReLU(h2) -> softmax(2)``.
Output index 0 is the anomaly probability, index 1 the normal probability.
Training is plain NumPy mini-batch gradient descent with momentum on the
mean cross-entropy; gradients come from hand-written backpropagation.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import seeds
from ._validation import check_labels, check_rows, degenerate_rows
from .core import Dataset, Label, WindowSample
from .exceptions import ConfigError, DimensionMismatch, EmptyClass, ParseError
from .textformat import LineReader, read_layer, write_layer

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
OPTIMIZERS = ("momentum", "sgd")


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int = 903
    hidden_dims: tuple = (50, 50)
    leaky_slope: float = 0.2
    dropout_keep: float = 1.0
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    optimizer: str = "momentum"
    keep_best: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ConfigError("input_dim must be positive")
        if len(self.hidden_dims) != 2 or min(self.hidden_dims) < 1:
            raise ConfigError(f"need exactly two positive hidden widths, got {self.hidden_dims}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigError(f"dropout_keep must lie in (0, 1], got {self.dropout_keep}")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")

    @property
    def dims(self) -> tuple:
        return (self.input_dim, *self.hidden_dims, 2)


@dataclass(eq=False)
class MlpModel:
    weights: list
    biases: list
    config: MlpConfig
    epochs_run: int = 0
    final_loss: float = float("nan")
    best_epoch: int = 0

    def __post_init__(self):
        dims = self.config.dims
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise DimensionMismatch("a model has exactly three weight layers")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise DimensionMismatch(f"layer {i} has shape {W.shape}, expected {(dims[i + 1], dims[i])}")

    def copy(self) -> "MlpModel":
        return MlpModel([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.config, self.epochs_run, self.final_loss, self.best_epoch)

    @property
    def n_parameters(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def parameters(self) -> list:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


def init_model(config: MlpConfig, rng: np.random.Generator | None = None) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = rng if rng is not None else seeds.generator(config.seed, "mlp-init")
    dims = config.dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, config)


def leaky_relu(z, slope):
    return np.where(z > 0, z, slope * z)


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(model: MlpModel, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.config.input_dim:
        raise DimensionMismatch(f"model takes {model.config.input_dim} inputs, got {X.shape[1]}")
    return X, single


def _dropout_masks(model, n, rng):
    keep = model.config.dropout_keep
    return [(rng.random((n, h)) < keep) / keep for h in model.config.hidden_dims]


def _forward(model: MlpModel, X, masks=None):
    slope = model.config.leaky_slope
    W1, W2, W3 = model.weights
    b1, b2, b3 = model.biases
    z1 = X @ W1.T + b1
    h1 = leaky_relu(z1, slope)
    if masks is not None:
        h1 = h1 * masks[0]
    z2 = h1 @ W2.T + b2
    h2 = leaky_relu(z2, slope)
    if masks is not None:
        h2 = h2 * masks[1]
    logits = h2 @ W3.T + b3
    return {"z1": z1, "h1": h1, "z2": z2, "h2": h2, "logits": logits, "p": softmax(logits)}


def forward(model: MlpModel, x, train_mode: bool = False, rng=None) -> np.ndarray:
    """Class probabilities ``[p_anomaly, p_normal]`` per row.

    In ``train_mode`` hidden units are dropped with probability
    ``1 - dropout_keep`` and survivors scaled by ``1/dropout_keep``.
    """
    X, single = _as_batch(model, x)
    masks = None
    if train_mode and model.config.dropout_keep < 1.0:
        if rng is None:
            raise ValueError("train_mode with dropout needs an rng")
        masks = _dropout_masks(model, X.shape[0], rng)
    p = _forward(model, X, masks)["p"]
    return p[0] if single else p


def hidden_activations(model: MlpModel, x):
    """Inference-mode outputs of both hidden layers."""
    X, single = _as_batch(model, x)
    cache = _forward(model, X)
    if single:
        return cache["h1"][0], cache["h2"][0]
    return cache["h1"], cache["h2"]


def _nll(p, y):
    picked = p[np.arange(y.size), y]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def loss(model: MlpModel, X, y) -> float:
    """Mean cross-entropy of the true class, inference mode."""
    X, _ = _as_batch(model, X)
    y = check_labels(y, X.shape[0])
    if y.size == 0:
        raise ValueError("loss needs a non-empty batch")
    return float(np.mean(_nll(_forward(model, X)["p"], y)))


def gradients(model: MlpModel, X, y, masks=None):
    """Loss and its gradients ``[dW1, db1, dW2, db2, dW3, db3]`` by backpropagation."""
    X, _ = _as_batch(model, X)
    y = check_labels(y, X.shape[0])
    m = X.shape[0]
    slope = model.config.leaky_slope
    c = _forward(model, X, masks)
    p = c["p"]
    value = float(np.mean(_nll(p, y)))

    dlogits = p.copy()
    dlogits[np.arange(m), y] -= 1.0
    # the probability floor makes the loss flat where it is active
    dlogits[p[np.arange(m), y] < PROB_FLOOR] = 0.0
    dlogits /= m

    W1, W2, W3 = model.weights
    dW3 = dlogits.T @ c["h2"]
    db3 = dlogits.sum(axis=0)
    dh2 = dlogits @ W3
    if masks is not None:
        dh2 = dh2 * masks[1]
    dz2 = dh2 * np.where(c["z2"] > 0, 1.0, slope)
    dW2 = dz2.T @ c["h1"]
    db2 = dz2.sum(axis=0)
    dh1 = dz2 @ W2
    if masks is not None:
        dh1 = dh1 * masks[0]
    dz1 = dh1 * np.where(c["z1"] > 0, 1.0, slope)
    dW1 = dz1.T @ X
    db1 = dz1.sum(axis=0)
    return value, [dW1, db1, dW2, db2, dW3, db3]


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    loss: float
    accuracy: float
    val_loss: float = float("nan")
    val_accuracy: float = float("nan")


def _accuracy(model, X, y):
    p = _forward(model, X)["p"]
    pred = np.where(p[:, 0] > 0.5, Label.ANOMALY, Label.NORMAL)
    return float(np.mean(pred == y)), float(np.mean(_nll(p, y)))


def _xy(data):
    if isinstance(data, Dataset):
        return data.X, data.y
    X, y = data
    if np.asarray(X).size == 0:
        raise EmptyClass("cannot train on an empty dataset")
    X = check_rows(X)
    return X, check_labels(y, X.shape[0])


def train(dataset, config: MlpConfig, validation=None):
    """Fit a model; returns ``(model, trace)`` with one :class:`TraceRow` per epoch.

    ``dataset`` and ``validation`` are :class:`Dataset` objects or ``(X, y)``
    pairs. Initialization, shuffling and dropout masks all derive from
    ``config.seed``. With ``config.keep_best`` the returned weights are those
    of the epoch with the lowest full-training-set loss (momentum runs at
    this input width occasionally spike late in training); otherwise the
    last epoch's weights are returned.
    """
    X, y = _xy(dataset)
    if X.shape[0] == 0:
        raise EmptyClass("cannot train on an empty dataset")
    if X.shape[1] != config.input_dim:
        raise ConfigError(f"config.input_dim={config.input_dim} but data has {X.shape[1]} columns")
    val = _xy(validation) if validation is not None else None

    model = init_model(config)
    shuffle_rng = seeds.generator(config.seed, "mlp-shuffle")
    dropout_rng = seeds.generator(config.seed, "mlp-dropout")
    mu = config.momentum if config.optimizer == "momentum" else 0.0
    velocity = [np.zeros_like(p) for p in model.parameters()]
    trace = []
    n = X.shape[0]
    best = None
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            masks = None
            if config.dropout_keep < 1.0:
                masks = _dropout_masks(model, idx.size, dropout_rng)
            _, grads = gradients(model, X[idx], y[idx], masks)
            for param, vel, grad in zip(model.parameters(), velocity, grads):
                vel *= mu
                vel -= config.learning_rate * grad
                param += vel
        acc, train_loss = _accuracy(model, X, y)
        row = TraceRow(epoch, train_loss, acc)
        if val is not None:
            val_acc, val_loss = _accuracy(model, *val)
            row = replace(row, val_loss=val_loss, val_accuracy=val_acc)
        trace.append(row)
        logger.debug("epoch %d loss %.5f acc %.4f", epoch, train_loss, acc)
        if config.keep_best and (best is None or train_loss < best[0]):
            best = (train_loss, epoch, [p.copy() for p in model.parameters()])
    model.epochs_run = config.epochs
    model.best_epoch = config.epochs
    if best is not None:
        _, model.best_epoch, params = best
        for param, saved in zip(model.parameters(), params):
            param[...] = saved
    if trace:
        model.final_loss = trace[model.best_epoch - 1].loss
    return model, trace


def undersample(pool, ratio: float = 2.0, seed: int = 0):
    """Keep every anomaly and a seeded uniform subset of normals.

    The normal count is chosen so ``anomalies / normals`` is as close to
    ``ratio`` as possible. Returns ``(dataset, achieved_ratio)``; when there
    are too few normals all are kept and the achieved ratio is higher.
    """
    samples = pool.samples if isinstance(pool, Dataset) else tuple(pool)
    if ratio <= 0:
        raise ConfigError("ratio must be positive")
    anomalies = [s for s in samples if s.label == Label.ANOMALY]
    normals = [s for s in samples if s.label == Label.NORMAL]
    if not anomalies or not normals:
        raise EmptyClass(f"pool has {len(anomalies)} anomalies and {len(normals)} normals")
    target = max(1, int(round(len(anomalies) / ratio)))
    rng = seeds.generator(seed, "undersample")
    if target < len(normals):
        keep = np.sort(rng.choice(len(normals), size=target, replace=False))
        normals = [normals[i] for i in keep]
    achieved = len(anomalies) / len(normals)
    if target > len(normals):
        logger.info("only %d normals for target %d; achieved ratio %.3f", len(normals), target, achieved)
    k = samples[0].k
    return Dataset(k, tuple(anomalies) + tuple(normals)), achieved


def predict(model: MlpModel, sample):
    """``(Label, p_anomaly)``; anomaly iff ``p_anomaly > 0.5``.

    Degenerate (constant) windows are Normal with ``p_anomaly = 0``.
    """
    if isinstance(sample, WindowSample):
        if sample.degenerate:
            return Label.NORMAL, 0.0
        x = sample.joint
    else:
        x = np.asarray(sample, dtype=float)
    p_anomaly = float(forward(model, x)[0])
    return (Label.ANOMALY if p_anomaly > 0.5 else Label.NORMAL), p_anomaly


def predict_batch(model: MlpModel, X, degenerate=None):
    """Vectorized :func:`predict`: ``(labels, p_anomaly)`` arrays."""
    X, _ = _as_batch(model, X)
    if degenerate is None:
        degenerate = degenerate_rows(X)
    p = forward(model, X)[:, 0]
    p = np.where(degenerate, 0.0, p)
    labels = np.where(p > 0.5, int(Label.ANOMALY), int(Label.NORMAL))
    return labels, p


# ---------------------------------------------------------------- text format

MODEL_MAGIC = "kpidnn-mlp 1"


def dump_model(model: MlpModel, fh) -> None:
    cfg = asdict(model.config)
    cfg["hidden_dims"] = ",".join(str(h) for h in model.config.hidden_dims)
    fh.write(MODEL_MAGIC + "\n")
    fh.write("config " + " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                                  for k, v in cfg.items()) + "\n")
    fh.write(f"meta epochs_run={model.epochs_run} final_loss={model.final_loss!r} "
             f"best_epoch={model.best_epoch}\n")
    fh.write("layers 3\n")
    names = ["leaky_relu", "leaky_relu", "softmax"]
    for W, b, act in zip(model.weights, model.biases, names):
        write_layer(fh, W, b, act)
    fh.write("end\n")


def _parse_pairs(parts, lineno):
    out = {}
    for part in parts:
        if "=" not in part:
            raise ParseError(f"expected key=value, found '{part}'", lineno)
        key, value = part.split("=", 1)
        out[key] = value
    return out


def load_model(fh) -> MlpModel:
    reader = LineReader(fh)
    if reader.next() != MODEL_MAGIC:
        raise ParseError("not a kpidnn model file", reader.lineno)
    raw = _parse_pairs(reader.expect("config"), reader.lineno)
    types = {f.name: f.type for f in MlpConfig.__dataclass_fields__.values()}
    cfg = {}
    for key, value in raw.items():
        if key not in types:
            raise ParseError(f"unknown config key '{key}'", reader.lineno)
        if key == "hidden_dims":
            cfg[key] = tuple(int(v) for v in value.split(","))
        elif key == "optimizer":
            cfg[key] = value
        elif key == "keep_best":
            if value not in ("True", "False"):
                raise ParseError(f"keep_best must be True or False, found {value!r}", reader.lineno)
            cfg[key] = value == "True"
        elif types[key] in ("int", int):
            cfg[key] = int(value)
        else:
            cfg[key] = float(value)
    config = MlpConfig(**cfg)
    meta = _parse_pairs(reader.expect("meta"), reader.lineno)
    if int(reader.expect("layers")[0]) != 3:
        raise ParseError("a model has exactly three layers", reader.lineno)
    weights, biases = [], []
    for _ in range(3):
        W, b, _act = read_layer(reader)
        weights.append(np.asarray(W))
        biases.append(b)
    reader.expect("end")
    return MlpModel(weights, biases, config, int(meta.get("epochs_run", 0)),
                    float(meta.get("final_loss", "nan")), int(meta.get("best_epoch", 0)))


def write_trace(trace, fh) -> None:
    fh.write("epoch,loss,accuracy,val_loss,val_accuracy\n")
    for row in trace:
        fh.write(f"{row.epoch},{row.loss:.9g},{row.accuracy:.9g},"
                 f"{row.val_loss:.9g},{row.val_accuracy:.9g}\n")


# ---------------------------------------------------------------- estimator

class DNNDetector(ClassifierMixin, TransformerMixin, BaseEstimator):
    """scikit-learn wrapper around :func:`train` / :func:`predict_batch`.

    ``X`` rows are normalized ``5k+3`` windows, ``y`` uses 0 = anomaly,
    1 = normal. ``transform`` returns the concatenated hidden-layer
    activations (the window embedding).
    """

    def __init__(self, hidden_dims=(50, 50), leaky_slope=0.2, dropout_keep=1.0,
                 learning_rate=0.01, momentum=0.9, batch_size=64, epochs=50,
                 optimizer="momentum", keep_best=True, random_state=0):
        self.hidden_dims = hidden_dims
        self.leaky_slope = leaky_slope
        self.dropout_keep = dropout_keep
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.optimizer = optimizer
        self.keep_best = keep_best
        self.random_state = random_state

    def _config(self, input_dim) -> MlpConfig:
        return MlpConfig(
            input_dim=input_dim, hidden_dims=tuple(self.hidden_dims), leaky_slope=self.leaky_slope,
            dropout_keep=self.dropout_keep, learning_rate=self.learning_rate,
            momentum=self.momentum, batch_size=self.batch_size, epochs=self.epochs,
            seed=int(self.random_state or 0), optimizer=self.optimizer, keep_best=self.keep_best,
        )

    def fit(self, X, y, eval_set: Optional[tuple] = None):
        X = check_rows(X)
        y = check_labels(y, X.shape[0])
        self.model_, self.trace_ = train((X, y), self._config(X.shape[1]), validation=eval_set)
        self.classes_ = np.array([int(Label.ANOMALY), int(Label.NORMAL)])
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model: MlpModel) -> "DNNDetector":
        c = model.config
        est = cls(c.hidden_dims, c.leaky_slope, c.dropout_keep, c.learning_rate, c.momentum,
                  c.batch_size, c.epochs, c.optimizer, c.keep_best, c.seed)
        est.model_, est.trace_ = model, []
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = c.input_dim
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_rows(X, n_features=self.n_features_in_)
        p = forward(self.model_, X)
        degenerate = degenerate_rows(X)
        p[degenerate] = [0.0, 1.0]
        return p

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_rows(X, n_features=self.n_features_in_)
        return predict_batch(self.model_, X)[0]

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_rows(X, n_features=self.n_features_in_)
        h1, h2 = hidden_activations(self.model_, X)
        return np.hstack([h1, h2])
