"""Availability-poisoning perturbation generators under an l-infinity budget.

Four families: error-minimizing and error-maximizing noise (alternating
bilevel crafting against a surrogate, signed-gradient inner steps),
gradient-free shortcuts (pixel overwrite and linearly-separable per-class
patterns), and representation-space objectives (push features away from
the original, or pull them onto a target).

Additive deltas are hard-projected into [-B, B] after every step, so the
budget invariant holds exactly. Applying a set clamps the perturbed
features back into the dataset's valid range.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from .data import Dataset
from .errors import (
    CapabilityError,
    ConfigError,
    CoverageError,
    DomainError,
)
from .model import Classifier, LossSpec, init_classifier
from .rng import RngStream

MODES = ("sample_wise", "class_wise")
OPS = ("additive", "overwrite")
BUDGET_SLACK = 1e-12


@dataclass(frozen=True)
class SurrogateSpec:
    """Architecture plus training recipe for the crafting surrogate."""

    arch: str = "linear"
    hidden_width: int = 16
    activation: str = "relu"
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 64


@dataclass(frozen=True)
class PerturbationSet:
    """Per-id or per-class deltas with budget, operator, and method tag."""

    mode: str
    budget: float
    op: str
    method: str
    entries: dict
    masks: dict | None = None
    pixel_cap: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.op not in OPS:
            raise ConfigError(f"unknown op {self.op!r}")
        if self.budget < 0:
            raise DomainError("budget must be non-negative")
        frozen = {}
        for key, delta in self.entries.items():
            delta = np.ascontiguousarray(delta, dtype=np.float64)
            delta.flags.writeable = False
            frozen[int(key)] = delta
            if self.op == "additive":
                peak = np.max(np.abs(delta)) if delta.size else 0.0
                if peak > self.budget + BUDGET_SLACK:
                    raise DomainError(
                        f"entry {key}: |delta|_inf {peak} exceeds budget {self.budget}"
                    )
        object.__setattr__(self, "entries", frozen)
        if self.op == "overwrite":
            if self.masks is None:
                raise ConfigError("overwrite sets need masks")
            masks = {}
            for key, mask in self.masks.items():
                mask = np.ascontiguousarray(mask, dtype=np.float64)
                if not np.isin(mask, (0.0, 1.0)).all():
                    raise DomainError("overwrite masks must be 0/1")
                if self.pixel_cap is not None and mask.sum() > self.pixel_cap:
                    raise DomainError("mask exceeds the pixel count cap")
                mask.flags.writeable = False
                masks[int(key)] = mask
            object.__setattr__(self, "masks", masks)

    def delta_for(self, example_id: int, label: int) -> np.ndarray:
        key = int(example_id) if self.mode == "sample_wise" else int(label)
        if key not in self.entries:
            kind = "example" if self.mode == "sample_wise" else "class"
            raise CoverageError(f"no perturbation entry for {kind} {key}")
        return self.entries[key]

    def mask_for(self, example_id: int, label: int) -> np.ndarray:
        key = int(example_id) if self.mode == "sample_wise" else int(label)
        return self.masks[key]

    def max_linf(self) -> float:
        if not self.entries:
            return 0.0
        return max(float(np.max(np.abs(d))) for d in self.entries.values())

    def save(self, path):
        doc = {
            "mode": self.mode,
            "B": self.budget,
            "op": self.op,
            "method": self.method,
            "pixel_cap": self.pixel_cap,
            "entries": {
                str(k): base64.b64encode(v.astype("<f8").tobytes()).decode("ascii")
                for k, v in self.entries.items()
            },
        }
        if self.masks is not None:
            doc["masks"] = {
                str(k): base64.b64encode(v.astype("<f8").tobytes()).decode("ascii")
                for k, v in self.masks.items()
            }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PerturbationSet":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)

        def decode(blob):
            return np.frombuffer(base64.b64decode(blob), dtype="<f8").astype(
                np.float64
            )

        return cls(
            mode=doc["mode"],
            budget=doc["B"],
            op=doc["op"],
            method=doc["method"],
            pixel_cap=doc.get("pixel_cap"),
            entries={int(k): decode(v) for k, v in doc["entries"].items()},
            masks=(
                {int(k): decode(v) for k, v in doc["masks"].items()}
                if "masks" in doc
                else None
            ),
        )


def zero_set(ds: Dataset, mode: str = "sample_wise") -> PerturbationSet:
    keys = ds.ids if mode == "sample_wise" else range(ds.num_classes)
    return PerturbationSet(
        mode=mode,
        budget=0.0,
        op="additive",
        method="zero",
        entries={int(k): np.zeros(ds.dim) for k in keys},
    )


def apply(ds: Dataset, ps: PerturbationSet) -> Dataset:
    """Perturbed copy of ds: x (+) delta, clamped to the valid feature range."""
    features = ds.features.copy()
    for i in range(len(ds)):
        delta = ps.delta_for(ds.ids[i], ds.labels[i])
        if delta.shape != (ds.dim,):
            raise CoverageError(f"delta for row {ds.ids[i]} has wrong width")
        if ps.op == "additive":
            features[i] = features[i] + delta
        else:
            mask = ps.mask_for(ds.ids[i], ds.labels[i]).astype(bool)
            features[i, mask] = delta[mask]
    if ps.op == "additive" and ds.feature_range is not None:
        features = np.clip(features, ds.feature_range[0], ds.feature_range[1])
    return ds.with_features(features)


def _perturbed_features(ds: Dataset, deltas: np.ndarray, mode: str) -> np.ndarray:
    if mode == "sample_wise":
        out = ds.features + deltas
    else:
        out = ds.features + deltas[ds.labels]
    if ds.feature_range is not None:
        out = np.clip(out, ds.feature_range[0], ds.feature_range[1])
    return out


def _entries_from(ds: Dataset, deltas: np.ndarray, mode: str) -> dict:
    if mode == "sample_wise":
        return {int(i): deltas[j] for j, i in enumerate(ds.ids)}
    return {k: deltas[k] for k in range(ds.num_classes)}


def _bilevel_generate(
    ds: Dataset,
    surrogate: SurrogateSpec,
    budget: float,
    mode: str,
    rounds: int,
    inner_model_steps: int,
    inner_noise_steps: int,
    step_size: float,
    rng: RngStream,
    ascend: bool,
    method: str,
) -> PerturbationSet:
    if budget < 0:
        raise DomainError("budget must be non-negative")
    if rounds < 1:
        raise ConfigError("rounds must be at least 1")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")

    spec = LossSpec(kind="cross_entropy", weight_decay=surrogate.weight_decay)
    clf = init_classifier(
        surrogate.arch,
        ds.dim,
        ds.num_classes,
        rng.child("surrogate-init"),
        hidden_width=surrogate.hidden_width,
        activation=surrogate.activation,
    )
    theta = clf.params
    velocity = np.zeros(theta.size)
    n = len(ds)
    shape = (n, ds.dim) if mode == "sample_wise" else (ds.num_classes, ds.dim)
    deltas = np.zeros(shape)
    direction = 1.0 if ascend else -1.0

    for rnd in range(rounds):
        # surrogate phase: SGD on the currently perturbed data
        order_gen = rng.child(("model-phase", rnd)).generator()
        perturbed = _perturbed_features(ds, deltas, mode)
        taken = 0
        while taken < inner_model_steps:
            order = order_gen.permutation(n)
            for start in range(0, n, surrogate.batch_size):
                if taken >= inner_model_steps:
                    break
                idx = order[start : start + surrogate.batch_size]
                batch = _ArrayBatch(perturbed[idx], ds.labels[idx])
                _, g = mdl.loss_and_grad(clf.with_params(theta), batch, spec)
                velocity = surrogate.momentum * velocity + g.values
                theta = theta.with_values(theta.values - surrogate.lr * velocity)
                taken += 1

        # noise phase: signed-gradient steps on the deltas, projected to B
        for _ in range(inner_noise_steps):
            perturbed = _perturbed_features(ds, deltas, mode)
            g = mdl.input_gradients(clf, theta, perturbed, ds.labels, spec)
            if mode == "class_wise":
                agg = np.zeros_like(deltas)
                for k in range(ds.num_classes):
                    rows = ds.labels == k
                    if rows.any():
                        agg[k] = g[rows].mean(axis=0)
                step = np.sign(agg)
            else:
                step = np.sign(g)
            deltas = np.clip(
                deltas + direction * step_size * step, -budget, budget
            )

    return PerturbationSet(
        mode=mode,
        budget=budget,
        op="additive",
        method=method,
        entries=_entries_from(ds, deltas, mode),
    )


@dataclass
class _ArrayBatch:
    features: np.ndarray
    labels: np.ndarray


def emin_generate(
    ds: Dataset,
    surrogate: SurrogateSpec,
    budget: float,
    mode: str,
    rounds: int,
    inner_model_steps: int,
    inner_noise_steps: int,
    step_size: float,
    rng: RngStream,
) -> PerturbationSet:
    """Error-minimizing noise: alternating min over surrogate and deltas."""
    return _bilevel_generate(
        ds, surrogate, budget, mode, rounds, inner_model_steps,
        inner_noise_steps, step_size, rng, ascend=False, method="emin",
    )


def emax_generate(
    ds: Dataset,
    surrogate: SurrogateSpec,
    budget: float,
    mode: str,
    rounds: int,
    inner_model_steps: int,
    inner_noise_steps: int,
    step_size: float,
    rng: RngStream,
) -> PerturbationSet:
    """Error-maximizing noise: the delta phase ascends the surrogate loss."""
    return _bilevel_generate(
        ds, surrogate, budget, mode, rounds, inner_model_steps,
        inner_noise_steps, step_size, rng, ascend=True, method="emax",
    )


def drift_scores(ds: Dataset, class_id: int) -> np.ndarray:
    """Standardized shift of a class's feature means from the global ones."""
    global_mean = ds.features.mean(axis=0)
    global_std = ds.features.std(axis=0)
    class_mean = ds.features[ds.labels == class_id].mean(axis=0)
    return np.abs(class_mean - global_mean) / (global_std + 1e-8)


def shortcut_pixels(ds: Dataset, pixels: int) -> PerturbationSet:
    """Gradient-free pixel shortcut: overwrite each class's top-drift pixels.

    Classes are processed in ascending order and claim pixels exclusively
    (ties broken toward the lower feature index), so every class gets its
    own distinct shortcut pattern.
    """
    if ds.image_side is None:
        raise CapabilityError("pixel shortcuts need an image-shaped dataset")
    if not 1 <= pixels <= ds.dim:
        raise DomainError(f"pixel count must be in [1, {ds.dim}]")
    if pixels * ds.num_classes > ds.dim:
        raise ConfigError(
            "not enough distinct pixels for every class at this pixel count"
        )
    claimed = np.zeros(ds.dim, dtype=bool)
    entries, masks = {}, {}
    for k in range(ds.num_classes):
        scores = drift_scores(ds, k)
        # stable ordering: descending score, ascending index on ties
        order = np.lexsort((np.arange(ds.dim), -scores))
        chosen = [j for j in order if not claimed[j]][:pixels]
        claimed[chosen] = True
        mask = np.zeros(ds.dim)
        mask[chosen] = 1.0
        delta = np.zeros(ds.dim)
        delta[chosen] = 1.0
        entries[k] = delta
        masks[k] = mask
    return PerturbationSet(
        mode="class_wise",
        budget=1.0,
        op="overwrite",
        method="shortcut_pixels",
        entries=entries,
        masks=masks,
        pixel_cap=pixels,
    )


def shortcut_linear(ds: Dataset, budget: float, rng: RngStream) -> PerturbationSet:
    """Per-class additive patch patterns scaled to |.|_inf = B exactly.

    Image data gets blocky (2x2-coarse) patterns; generic data gets dense
    random ones. K distinct random patterns in d >= K dimensions are
    linearly separable, which is what makes them work as shortcuts.
    """
    if not budget > 0:
        raise DomainError("budget must be positive")
    entries = {}
    for k in range(ds.num_classes):
        gen = rng.child(("pattern", k)).generator()
        if ds.image_side is not None:
            side = ds.image_side
            coarse = gen.uniform(-1.0, 1.0, size=(2, 2))
            reps = (side + 1) // 2
            pattern = np.kron(coarse, np.ones((reps, reps)))[:side, :side].ravel()
        else:
            pattern = gen.uniform(-1.0, 1.0, size=ds.dim)
        peak = np.max(np.abs(pattern))
        entries[k] = pattern * (budget / peak)
    return PerturbationSet(
        mode="class_wise",
        budget=budget,
        op="additive",
        method="shortcut_linear",
        entries=entries,
    )


def _feature_objective_step(
    clf: Classifier, x_perturbed: np.ndarray, target: np.ndarray
) -> np.ndarray:
    """Gradient of sum_i ||phi(x_i) - target_i||^2 w.r.t. the inputs."""
    from . import autodiff as ad

    node = ad.Node(x_perturbed)
    params = {name: ad.Node(seg) for name, seg in clf.params.segments().items()}
    feats = (
        node
        if clf.arch == "linear"
        else (
            ad.relu(ad.add(ad.matmul(node, params["W1"]), params["b1"]))
            if clf.activation == "relu"
            else ad.tanh(ad.add(ad.matmul(node, params["W1"]), params["b1"]))
        )
    )
    diff = ad.sub(feats, target)
    total = ad.sum_(ad.mul(diff, diff))
    return ad.gradients(total, [node])[0]


def feature_dissim(
    ds: Dataset,
    surrogate_clf: Classifier,
    budget: float,
    steps: int,
    step_size: float,
    rng: RngStream | None = None,
) -> PerturbationSet:
    """Push each sample's representation away from its own. Label-free.

    The objective has a zero gradient exactly at delta=0, so samples that
    stall there get a random in-budget kick before ascending.
    """
    if budget < 0:
        raise DomainError("budget must be non-negative")
    rng = rng if rng is not None else RngStream(0).child("feature-dissim")
    base_feats = mdl.feature_map(surrogate_clf, ds.features)
    deltas = np.zeros_like(ds.features)
    for step in range(steps):
        g = _feature_objective_step(surrogate_clf, ds.features + deltas, base_feats)
        stalled = ~np.any(g != 0.0, axis=1)
        move = np.sign(g)
        if stalled.any() and budget > 0:
            gen = rng.child(("kick", step)).generator()
            kick = gen.choice([-1.0, 1.0], size=(int(stalled.sum()), ds.dim))
            move[stalled] = kick
        deltas = np.clip(deltas + step_size * move, -budget, budget)
    return PerturbationSet(
        mode="sample_wise",
        budget=budget,
        op="additive",
        method="feature_dissim",
        entries=_entries_from(ds, deltas, "sample_wise"),
    )


def feature_collide(
    ds: Dataset,
    surrogate_clf: Classifier,
    target_x: np.ndarray,
    budget: float,
    steps: int,
    step_size: float,
) -> PerturbationSet:
    """Pull each sample's representation onto the target's."""
    if budget < 0:
        raise DomainError("budget must be non-negative")
    target_x = np.asarray(target_x, dtype=np.float64).reshape(1, -1)
    target_feats = mdl.feature_map(surrogate_clf, target_x)
    target = np.broadcast_to(target_feats, (len(ds), target_feats.shape[1]))
    deltas = np.zeros_like(ds.features)
    for _ in range(steps):
        g = _feature_objective_step(surrogate_clf, ds.features + deltas, target)
        deltas = np.clip(deltas - step_size * np.sign(g), -budget, budget)
    return PerturbationSet(
        mode="sample_wise",
        budget=budget,
        op="additive",
        method="feature_collide",
        entries=_entries_from(ds, deltas, "sample_wise"),
    )
