"""Architecture descriptions, the training loop, and the classifier wrapper.

``build_architecture`` returns the six published model layouts with their
training recipes baked in as defaults; epochs, batch size, and learning rate
stay overridable per run. Training is plain mini-batch Adam on softmax cross
entropy, single-threaded and fully reproducible from one seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from ..errors import ConfigurationError, DomainError, ShapeError, TrainingDivergenceError
from . import layers as L


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    config: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Ordered layer descriptors plus the training recipe for one model family."""

    name: str
    input_shape: tuple
    layers: tuple[LayerSpec, ...]
    classes: int
    learning_rate: float
    batch_size: int
    epochs: int
    loss: str = "categorical_cross_entropy"

    def __post_init__(self):
        if not self.layers or self.layers[-1].kind != "softmax_output":
            raise ConfigurationError("the last layer must be softmax_output")
        if self.classes < 2:
            raise ConfigurationError(f"need at least 2 classes, got {self.classes}")

    def with_overrides(self, epochs=None, batch_size=None, learning_rate=None) -> "ArchitectureSpec":
        spec = self
        if epochs is not None:
            spec = replace(spec, epochs=int(epochs))
        if batch_size is not None:
            spec = replace(spec, batch_size=int(batch_size))
        if learning_rate is not None:
            spec = replace(spec, learning_rate=float(learning_rate))
        return spec

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [{"kind": l.kind, "config": l.config} for l in self.layers],
            "classes": self.classes,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "loss": self.loss,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArchitectureSpec":
        return ArchitectureSpec(
            name=d["name"],
            input_shape=tuple(d["input_shape"]),
            layers=tuple(LayerSpec(l["kind"], dict(l["config"])) for l in d["layers"]),
            classes=int(d["classes"]),
            learning_rate=float(d["learning_rate"]),
            batch_size=int(d["batch_size"]),
            epochs=int(d["epochs"]),
            loss=d.get("loss", "categorical_cross_entropy"),
        )


ARCHITECTURES = ("mlp", "fcn", "cnn1d", "cnn2d", "lstm", "bilstm")


def build_architecture(name: str, j: int, n: int, classes: int) -> ArchitectureSpec:
    """Published layout and training recipe for one of the six network families."""
    d = lambda kind, **cfg: LayerSpec(kind, cfg)
    if name == "mlp":
        layer_list = [
            d("dense", units=64, activation="relu"),
            d("dense", units=64, activation="relu"),
            d("dense", units=64, activation="relu"),
            d("flatten"),
            d("softmax_output"),
        ]
        return ArchitectureSpec(name, (j, n), tuple(layer_list), classes, 0.0003, 256, 30)
    if name == "fcn":
        layer_list = []
        for kernel, rate in ((8, 0.3), (5, 0.3), (3, 0.2)):
            layer_list += [
                d("conv2d", filters=16, kernel=kernel, padding="same"),
                d("batchnorm"),
                d("relu"),
                d("dropout", rate=rate),
            ]
        layer_list += [d("global_avg_pool"), d("flatten"), d("softmax_output")]
        return ArchitectureSpec(name, (j, n, 1), tuple(layer_list), classes, 0.00005, 100, 30)
    if name == "cnn1d":
        layer_list = [
            d("conv1d", filters=64, kernel=5, activation="relu", padding="valid"),
            d("maxpool1d", pool=3, stride=1, padding="same"),
            d("batchnorm"),
            d("flatten"),
            d("dense", units=32, activation="relu"),
            d("dense", units=32, activation="relu"),
            d("softmax_output"),
        ]
        return ArchitectureSpec(name, (j, n), tuple(layer_list), classes, 0.00003, 256, 30)
    if name == "cnn2d":
        layer_list = [
            d("conv2d", filters=64, kernel=5, activation="relu", padding="valid"),
            d("maxpool2d", pool=3, stride=1, padding="same"),
            d("batchnorm"),
            d("dense", units=32, activation="relu"),
            d("dense", units=32, activation="relu"),
            d("flatten"),
            d("softmax_output"),
        ]
        return ArchitectureSpec(name, (j, n, 1), tuple(layer_list), classes, 0.00003, 256, 30)
    if name == "lstm":
        layer_list = [
            d("lstm", units=64, return_sequences=True),
            d("dropout", rate=0.2),
            d("lstm", units=64, return_sequences=True),
            d("dropout", rate=0.2),
            d("lstm", units=64, return_sequences=False),
            d("dropout", rate=0.2),
            d("softmax_output"),
        ]
        return ArchitectureSpec(name, (j, n), tuple(layer_list), classes, 0.00003, 200, 30)
    if name == "bilstm":
        layer_list = [
            d("bidirectional", units=64, return_sequences=True),
            d("dropout", rate=0.3),
            d("bidirectional", units=64, return_sequences=False),
            d("dropout", rate=0.3),
            d("softmax_output"),
        ]
        return ArchitectureSpec(name, (j, n), tuple(layer_list), classes, 0.00003, 1024, 30)
    raise ConfigurationError(f"unknown architecture {name!r}; expected one of {ARCHITECTURES}")


def _make_layer(spec: LayerSpec, classes: int) -> L.Layer:
    kind, cfg = spec.kind, spec.config
    if kind == "dense":
        return L.Dense(cfg["units"], cfg.get("activation"))
    if kind == "relu":
        return L.Relu()
    if kind == "flatten":
        return L.Flatten()
    if kind == "conv1d":
        return L.Conv1D(cfg["filters"], cfg["kernel"], cfg.get("activation"), cfg.get("padding", "valid"))
    if kind == "conv2d":
        return L.Conv2D(cfg["filters"], cfg["kernel"], cfg.get("activation"), cfg.get("padding", "valid"))
    if kind == "maxpool1d":
        return L.MaxPool1D(cfg["pool"], cfg.get("stride", 1), cfg.get("padding", "same"))
    if kind == "maxpool2d":
        return L.MaxPool2D(cfg["pool"], cfg.get("stride", 1), cfg.get("padding", "same"))
    if kind == "batchnorm":
        return L.BatchNorm()
    if kind == "dropout":
        return L.Dropout(cfg["rate"])
    if kind == "global_avg_pool":
        return L.GlobalAvgPool2D()
    if kind == "lstm":
        return L.LSTM(cfg["units"], cfg.get("return_sequences", False))
    if kind == "bidirectional":
        return L.Bidirectional(cfg["units"], cfg.get("return_sequences", False))
    if kind == "softmax_output":
        return L.Dense(classes, None)
    raise ConfigurationError(f"unknown layer kind {kind!r}")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross entropy over the batch and its gradient w.r.t. the logits."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"logits must be (batch, classes>=2), got {logits.shape}")
    y = np.asarray(y, dtype=np.int64)
    if y.min() < 0 or y.max() >= logits.shape[1]:
        raise DomainError(f"label outside [0, {logits.shape[1]})")
    b = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(b), y]))
    grad = softmax(logits)
    grad[np.arange(b), y] -= 1.0
    return loss, grad / b


def adam_step(param, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, t=1):
    """One bias-corrected Adam update, in place; ``state`` is the (m, v) pair."""
    if param.shape != grad.shape:
        raise ShapeError(f"param shape {param.shape} vs grad shape {grad.shape}")
    m, v = state
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    mhat = m / (1 - beta1 ** t)
    vhat = v / (1 - beta2 ** t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
    return param, state


class Adam:
    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state: dict[tuple[int, str], tuple[np.ndarray, np.ndarray]] = {}

    def update(self, net: "Network"):
        self.t += 1
        for li, name, param in net.named_params():
            key = (li, name)
            if key not in self.state:
                self.state[key] = (np.zeros_like(param), np.zeros_like(param))
            adam_step(
                param, net.layers[li].grads[name], self.state[key],
                self.lr, self.beta1, self.beta2, self.eps, self.t,
            )


class Network:
    """A built architecture: ordered layers with chained shapes, ready to train."""

    def __init__(self, spec: ArchitectureSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers: list[L.Layer] = []
        shape = tuple(spec.input_shape)
        for lspec in spec.layers:
            layer = _make_layer(lspec, spec.classes)
            shape = layer.build(shape, rng)
            self.layers.append(layer)
        if shape != (spec.classes,):
            raise ShapeError(f"architecture ends with shape {shape}, expected ({spec.classes},)")

    def named_params(self):
        for li, layer in enumerate(self.layers):
            for name in layer.param_order:
                yield li, name, layer.params[name]

    def named_buffers(self):
        for li, layer in enumerate(self.layers):
            for name in layer.buffer_order:
                yield li, name, layer.buffers[name]

    def n_parameters(self) -> int:
        return sum(p.size for _, _, p in self.named_params())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        want = tuple(self.spec.input_shape)
        if x.ndim == len(want) + 1 and tuple(x.shape[1:]) == want:
            return x
        # windows arrive as (batch, j, n); image-style nets declare (j, n, 1)
        if len(want) == 3 and want[2] == 1 and x.ndim == 3 and tuple(x.shape[1:]) == want[:2]:
            return x[..., None]
        raise ShapeError(f"input shape {x.shape[1:]} does not match declared {want}")

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        out = self._check_input(x)
        for layer in self.layers:
            out = layer.forward(out, train)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def predict_proba(self, x: np.ndarray, chunk: int = 1024) -> np.ndarray:
        x = self._check_input(x)
        parts = [softmax(self.forward(x[s:s + chunk], train=False)) for s in range(0, x.shape[0], chunk)]
        return np.concatenate(parts, axis=0)

    def predict(self, x: np.ndarray, chunk: int = 1024) -> np.ndarray:
        return np.argmax(self.predict_proba(x, chunk=chunk), axis=1)


def train_network(
    spec: ArchitectureSpec,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    seed: int = 0,
) -> tuple[Network, list[dict]]:
    """Mini-batch Adam training; returns the net in inference state plus a per-epoch log.

    Shuffling, weight init, and dropout masks all derive from ``seed``; two
    single-threaded runs with identical inputs produce identical weights.
    """
    net = Network(spec, seed=seed)
    y_train = np.asarray(y_train, dtype=np.int64)
    opt = Adam(spec.learning_rate)
    shuffle_rng = np.random.default_rng(seed + 1)
    log: list[dict] = []
    m = x_train.shape[0]
    for epoch in range(spec.epochs):
        order = shuffle_rng.permutation(m)
        losses, hits, seen = [], 0, 0
        for bi, start in enumerate(range(0, m, spec.batch_size)):
            idx = order[start:start + spec.batch_size]
            if idx.size < 2:
                continue  # batchnorm train mode needs >= 2 rows
            xb = x_train[idx]
            logits = net.forward(xb, train=True)
            loss, grad = softmax_cross_entropy(logits, y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDivergenceError(
                    f"loss became non-finite at epoch {epoch}, batch {bi}", epoch=epoch, batch=bi
                )
            net.backward(grad)
            opt.update(net)
            losses.append(loss)
            hits += int((np.argmax(logits, axis=1) == y_train[idx]).sum())
            seen += idx.size
        entry = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)) if losses else float("nan"),
            "train_acc": hits / seen if seen else float("nan"),
        }
        if x_val is not None and len(x_val):
            pred = net.predict(x_val)
            entry["val_acc"] = float(np.mean(pred == np.asarray(y_val)))
        log.append(entry)
    return net, log


class NeuralNetClassifier(BaseEstimator, ClassifierMixin):
    """Windows-in/labels-out wrapper around the six published architectures.

    ``epochs``, ``batch_size``, and ``learning_rate`` default to the recipe
    of the chosen architecture when left as None.
    """

    def __init__(
        self,
        architecture: str = "mlp",
        epochs: int | None = None,
        batch_size: int | None = None,
        learning_rate: float | None = None,
        random_state: int = 0,
    ):
        self.architecture = architecture
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y, class_count: int | None = None, validation=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise ShapeError(f"expected windows of shape (batch, j, n), got {X.shape}")
        y = np.asarray(y, dtype=np.int64)
        classes = int(class_count if class_count is not None else y.max() + 1)
        spec = build_architecture(self.architecture, X.shape[1], X.shape[2], classes).with_overrides(
            epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate
        )
        x_val, y_val = validation if validation is not None else (None, None)
        self.net_, self.log_ = train_network(spec, X, y, x_val, y_val, seed=self.random_state)
        self.spec_ = self.net_.spec
        self.class_count_ = classes
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "net_"):
            raise NotFittedError("fit the network before predicting")
        return self.net_.predict(np.asarray(X, dtype=np.float64))

    def predict_proba(self, X) -> np.ndarray:
        if not hasattr(self, "net_"):
            raise NotFittedError("fit the network before predicting")
        return self.net_.predict_proba(np.asarray(X, dtype=np.float64))
