"""Minibatch SGD with momentum: the stochastic learning algorithm.

Training is bitwise deterministic given (architecture, data, config):
per-epoch shuffles and augmentation draws come from child streams of the
config seed, so two runs with equal inputs produce equal parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, augment_batch
from .errors import ConfigError, DomainError
from .model import Classifier, LossSpec, init_classifier, loss_and_grad, logits
from .rng import RngStream

AUGMENT_MODES = ("none", "jitter", "jitter+mirror")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    augment: str = "none"
    sigma_aug: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr >= 0:
            raise ConfigError("lr must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.augment not in AUGMENT_MODES:
            raise ConfigError(f"unknown augment mode {self.augment!r}")

    def loss_spec(self) -> LossSpec:
        return LossSpec(kind="cross_entropy", weight_decay=self.weight_decay)


@dataclass
class _Batch:
    features: np.ndarray
    labels: np.ndarray


def _accuracy(clf: Classifier, ds: Dataset) -> float:
    if len(ds) == 0:
        return float("nan")
    pred = np.argmax(logits(clf, ds.features), axis=1)
    return float(np.mean(pred == ds.labels))


def train(
    clf: Classifier,
    ds: Dataset,
    cfg: TrainConfig,
    eval_ds: Dataset | None = None,
):
    """Run SGD on `ds`; returns (classifier, per-epoch history records)."""
    if len(ds) == 0 and cfg.epochs > 0:
        raise DomainError("cannot train on an empty dataset")
    spec = cfg.loss_spec()
    rng = RngStream(cfg.seed)
    theta = clf.params
    velocity = np.zeros(theta.size)
    history = []
    n = len(ds)
    for epoch in range(cfg.epochs):
        order = rng.child(("shuffle", epoch)).generator().permutation(n)
        aug_gen = rng.child(("augment", epoch)).generator()
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            feats = ds.features[idx]
            if cfg.augment != "none":
                feats = augment_batch(
                    feats, cfg.augment, cfg.sigma_aug, aug_gen,
                    ds.image_side, ds.feature_range,
                )
            batch = _Batch(feats, ds.labels[idx])
            loss, g = loss_and_grad(clf.with_params(theta), batch, spec)
            velocity = cfg.momentum * velocity + g.values
            theta = theta.with_values(theta.values - cfg.lr * velocity)
            losses.append(loss)
        current = clf.with_params(theta)
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "train_acc": _accuracy(current, ds),
        }
        if eval_ds is not None:
            record["test_acc"] = _accuracy(current, eval_ds)
        history.append(record)
    return clf.with_params(theta), history


def retrain_from_scratch(
    reference: Classifier,
    d_r: Dataset,
    cfg: TrainConfig,
    eval_ds: Dataset | None = None,
):
    """Fresh seeded init, then train on the retain set only (the RT baseline)."""
    fresh = init_classifier(
        reference.arch,
        reference.input_dim,
        reference.num_classes,
        RngStream(cfg.seed).child("init"),
        hidden_width=reference.hidden_width,
        activation=reference.activation,
    )
    return train(fresh, d_r, cfg, eval_ds=eval_ds)


def fit_new(
    arch: str,
    ds: Dataset,
    cfg: TrainConfig,
    hidden_width: int = 32,
    activation: str = "relu",
    eval_ds: Dataset | None = None,
):
    """Init (seeded by cfg) and train in one call; the standard entry point."""
    clf = init_classifier(
        arch,
        ds.dim,
        ds.num_classes,
        RngStream(cfg.seed).child("init"),
        hidden_width=hidden_width,
        activation=activation,
    )
    return train(clf, ds, cfg, eval_ds=eval_ds)


def write_history_csv(history, path):
    """Emit history.csv: epoch, train_loss, train_acc, test_acc."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "test_acc"])
        for rec in history:
            writer.writerow(
                [
                    rec["epoch"],
                    format(rec["train_loss"], ".17g"),
                    format(rec["train_acc"], ".17g"),
                    format(rec.get("test_acc", float("nan")), ".17g"),
                ]
            )
