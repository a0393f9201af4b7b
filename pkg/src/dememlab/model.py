"""The classifier family: softmax-linear and one-hidden-layer MLP.

Both architectures share a flat :class:`ParameterVector` so the weight-space
machinery (projection, noise, recovery) never needs to know the layout.
The quadratic ("ridge") loss keeps an exactly constant positive-definite
Hessian on the linear architecture, which is what makes Newton-style
removal updates exactly checkable against closed-form retraining.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DomainError, ShapeError
from .params import ParameterVector, normalize_layout
from .rng import RngStream

ARCHS = ("linear", "mlp")
ACTIVATIONS = ("relu", "tanh")
LOSS_KINDS = ("cross_entropy", "ridge_quadratic")


@dataclass(frozen=True)
class Classifier:
    arch: str
    input_dim: int
    num_classes: int
    params: ParameterVector
    hidden_width: int = 0
    activation: str = "relu"

    def with_params(self, params: ParameterVector) -> "Classifier":
        if params.layout != self.params.layout:
            raise ShapeError("checkpoint layout does not match architecture")
        return replace(self, params=params)


@dataclass(frozen=True)
class LossSpec:
    kind: str = "cross_entropy"
    ridge_lambda: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.kind == "ridge_quadratic" and not self.ridge_lambda > 0:
            raise ConfigError("ridge_quadratic requires ridge_lambda > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")

    @property
    def reg_coefficient(self) -> float:
        lam = self.ridge_lambda if self.kind == "ridge_quadratic" else 0.0
        return lam + self.weight_decay


def layout_for(arch: str, input_dim: int, num_classes: int, hidden_width: int = 0):
    if arch == "linear":
        return normalize_layout(
            [("W", (input_dim, num_classes)), ("b", (num_classes,))]
        )
    if arch == "mlp":
        if hidden_width < 1:
            raise ConfigError("mlp needs hidden_width >= 1")
        return normalize_layout(
            [
                ("W1", (input_dim, hidden_width)),
                ("b1", (hidden_width,)),
                ("W2", (hidden_width, num_classes)),
                ("b2", (num_classes,)),
            ]
        )
    raise ConfigError(f"unknown arch {arch!r}")


def init_classifier(
    arch: str,
    input_dim: int,
    num_classes: int,
    rng: RngStream,
    hidden_width: int = 32,
    activation: str = "relu",
) -> Classifier:
    """Seeded init: weights ~ N(0, 2/fan_in), biases zero."""
    if arch not in ARCHS:
        raise ConfigError(f"unknown arch {arch!r}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    if arch == "linear":
        hidden_width = 0
    layout = layout_for(arch, input_dim, num_classes, hidden_width)
    segs = {}
    for name, shape in layout:
        if name.startswith("b"):
            segs[name] = np.zeros(shape)
        else:
            fan_in = shape[0]
            gen = rng.child(f"init-{name}").generator()
            segs[name] = gen.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return Classifier(
        arch=arch,
        input_dim=input_dim,
        num_classes=num_classes,
        params=ParameterVector.from_segments(segs, layout),
        hidden_width=hidden_width,
        activation=activation,
    )


def _check_input(clf: Classifier, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != clf.input_dim:
        raise ShapeError(
            f"expected inputs of shape (n, {clf.input_dim}), got {x.shape}"
        )
    return x


def logits(clf: Classifier, x: np.ndarray) -> np.ndarray:
    x = _check_input(clf, x)
    segs = clf.params.segments()
    if clf.arch == "linear":
        return x @ segs["W"] + segs["b"]
    h = x @ segs["W1"] + segs["b1"]
    h = np.maximum(h, 0.0) if clf.activation == "relu" else np.tanh(h)
    return h @ segs["W2"] + segs["b2"]


def forward(clf: Classifier, x: np.ndarray) -> np.ndarray:
    """Class probabilities, rows summing to 1."""
    return ad.softmax(logits(clf, x))


def feature_map(clf: Classifier, x: np.ndarray) -> np.ndarray:
    """Penultimate activations for the MLP; the identity for linear."""
    x = _check_input(clf, x)
    if clf.arch == "linear":
        return x
    segs = clf.params.segments()
    h = x @ segs["W1"] + segs["b1"]
    return np.maximum(h, 0.0) if clf.activation == "relu" else np.tanh(h)


def _traced_logits(clf: Classifier, params: dict, x):
    """Logits built from autodiff ops; x may be a Node for input gradients."""
    if clf.arch == "linear":
        return ad.add(ad.matmul(x, params["W"]), params["b"])
    h = ad.add(ad.matmul(x, params["W1"]), params["b1"])
    h = ad.relu(h) if clf.activation == "relu" else ad.tanh(h)
    return ad.add(ad.matmul(h, params["W2"]), params["b2"])


def _per_example_loss(clf: Classifier, params: dict, x, y, spec: LossSpec):
    out = _traced_logits(clf, params, x)
    if spec.kind == "cross_entropy":
        return ad.softmax_cross_entropy(out, y)
    onehot = np.zeros((len(y), clf.num_classes))
    onehot[np.arange(len(y)), y] = 1.0
    diff = ad.sub(out, onehot)
    return ad.mul(ad.sum_(ad.mul(diff, diff), axis=1), 0.5)


def _reg_term(params: dict, spec: LossSpec):
    total = None
    for node in params.values():
        sq = ad.sum_(ad.mul(node, node))
        total = sq if total is None else ad.add(total, sq)
    return ad.mul(total, 0.5 * spec.reg_coefficient)


def traced_batch_loss(clf: Classifier, params: dict, x, y, spec: LossSpec):
    """Mean per-example loss plus the weight penalty, as a traced scalar."""
    data = ad.mean_(_per_example_loss(clf, params, x, y, spec))
    if spec.reg_coefficient > 0:
        return ad.add(data, _reg_term(params, spec))
    return data


def loss_and_grad(clf: Classifier, batch, spec: LossSpec):
    """(mean loss over batch + weight penalty, exact parameter gradient)."""
    x = _check_input(clf, batch.features)
    y = np.asarray(batch.labels)
    if len(y) == 0:
        raise DomainError("empty batch")
    return ad.value_and_grad(
        lambda p: traced_batch_loss(clf, p, x, y, spec), clf.params
    )


def per_sample_grads(clf: Classifier, batch, spec: LossSpec):
    """One gradient per example; their mean equals the batch gradient."""
    x = _check_input(clf, batch.features)
    y = np.asarray(batch.labels)
    if len(y) == 0:
        raise DomainError("empty batch")
    out = []
    for i in range(len(y)):
        xi, yi = x[i : i + 1], y[i : i + 1]
        _, g = ad.value_and_grad(
            lambda p: traced_batch_loss(clf, p, xi, yi, spec), clf.params
        )
        out.append(g)
    return out


def input_gradients(clf: Classifier, theta: ParameterVector, x, y, spec: LossSpec):
    """d(sum of per-example losses)/dx, one row per example."""
    x = np.asarray(x, dtype=np.float64)
    node = ad.Node(x)
    params = {name: ad.Node(seg) for name, seg in theta.segments().items()}
    total = ad.sum_(_per_example_loss(clf, params, node, np.asarray(y), spec))
    return ad.gradients(total, [node])[0]


def save_checkpoint(clf: Classifier, path):
    payload = base64.b64encode(
        clf.params.values.astype("<f8").tobytes()
    ).decode("ascii")
    doc = {
        "arch": clf.arch,
        "input_dim": clf.input_dim,
        "num_classes": clf.num_classes,
        "hidden_width": clf.hidden_width,
        "activation": clf.activation,
        "layout": [[n, list(s)] for n, s in clf.params.layout],
        "layout_hash": clf.params.layout_hash(),
        "params_b64": payload,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> Classifier:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    layout = normalize_layout([(n, tuple(s)) for n, s in doc["layout"]])
    values = np.frombuffer(
        base64.b64decode(doc["params_b64"]), dtype="<f8"
    ).astype(np.float64)
    params = ParameterVector(values, layout)
    if params.layout_hash() != doc["layout_hash"]:
        raise ShapeError("checkpoint layout hash mismatch")
    expected = layout_for(
        doc["arch"], doc["input_dim"], doc["num_classes"], doc["hidden_width"]
    )
    if layout != expected:
        raise ShapeError("checkpoint layout does not match declared architecture")
    return Classifier(
        arch=doc["arch"],
        input_dim=doc["input_dim"],
        num_classes=doc["num_classes"],
        params=params,
        hidden_width=doc["hidden_width"],
        activation=doc["activation"],
    )
