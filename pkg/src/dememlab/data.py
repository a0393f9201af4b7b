"""Synthetic corpora, split roles, and dataset serialization.

Two desk-scale generators stand in for image benchmarks: well-separated
Gaussian blobs (for closed-form sanity checks) and 8x8 grayscale "grid
images" built from per-class low-frequency templates (so pixel-level
shortcut perturbations have something image-like to bite on).

Split roles follow the protected/clean/test/observation protocol:
role "u" rows get perturbed before training, and their clean originals
form the id-aligned counterpart view.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError, SplitError
from .rng import RngStream

ROLES = ("u", "c", "t", "tr")


def _freeze(arr, dtype):
    arr = np.ascontiguousarray(arr, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable labeled examples with stable integer ids."""

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    num_classes: int
    feature_range: tuple | None = None
    image_side: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", _freeze(self.features, np.float64))
        object.__setattr__(self, "labels", _freeze(self.labels, np.int64))
        object.__setattr__(self, "ids", _freeze(self.ids, np.int64))
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ShapeError("features must be a 2-D array")
        if self.labels.shape != (n,) or self.ids.shape != (n,):
            raise ShapeError("labels and ids must align with features")
        if len(np.unique(self.ids)) != n:
            raise DomainError("ids must be unique")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DomainError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def is_complete(self) -> bool:
        """True when every class id below num_classes is present."""
        return len(np.unique(self.labels)) == self.num_classes

    def take(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.ids[indices],
            self.num_classes,
            self.feature_range,
            self.image_side,
        )

    def by_ids(self, ids) -> "Dataset":
        ids = np.asarray(ids, dtype=np.int64)
        pos = {int(v): i for i, v in enumerate(self.ids)}
        try:
            indices = [pos[int(v)] for v in ids]
        except KeyError as exc:
            raise SplitError(f"id {exc.args[0]} not present in dataset") from exc
        return self.take(indices)

    def with_features(self, features: np.ndarray) -> "Dataset":
        features = np.asarray(features, dtype=np.float64)
        if features.shape != self.features.shape:
            raise ShapeError("replacement features must keep the same shape")
        return Dataset(
            features,
            self.labels,
            self.ids,
            self.num_classes,
            self.feature_range,
            self.image_side,
        )

    def concat(self, other: "Dataset") -> "Dataset":
        if other.dim != self.dim or other.num_classes != self.num_classes:
            raise ShapeError("cannot concatenate incompatible datasets")
        return Dataset(
            np.vstack([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            np.concatenate([self.ids, other.ids]),
            self.num_classes,
            self.feature_range,
            self.image_side,
        )


def make_blobs(
    n_per_class: int, num_classes: int, dim: int, separation: float, rng: RngStream
) -> Dataset:
    """Gaussian clusters with unit covariance and centers >= separation apart."""
    if n_per_class < 1 or num_classes < 2 or dim < 2:
        raise ConfigError("need n_per_class >= 1, num_classes >= 2, dim >= 2")
    if not separation > 0:
        raise ConfigError("separation must be positive")
    if num_classes > 2**dim:
        raise ConfigError(
            f"cannot place {num_classes} separated centers in {dim} dimensions"
        )
    centers = rng.child("centers").generator().normal(size=(num_classes, dim))
    dists = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
    min_dist = dists[~np.eye(num_classes, dtype=bool)].min()
    if min_dist <= 0:
        raise ConfigError("degenerate center placement")
    if min_dist < separation:
        centers = centers * (separation / min_dist)
    feats, labels = [], []
    for k in range(num_classes):
        gen = rng.child(f"class-{k}").generator()
        feats.append(centers[k] + gen.normal(size=(n_per_class, dim)))
        labels.append(np.full(n_per_class, k))
    features = np.vstack(feats)
    return Dataset(
        features,
        np.concatenate(labels),
        np.arange(features.shape[0]),
        num_classes,
    )


def _bilinear_resize(coarse: np.ndarray, side: int) -> np.ndarray:
    m = coarse.shape[0]
    src = np.linspace(0.0, m - 1.0, side)
    i0 = np.clip(np.floor(src).astype(int), 0, m - 2)
    frac = src - i0
    rows = (
        coarse[i0] * (1 - frac)[:, None] + coarse[i0 + 1] * frac[:, None]
    )
    cols = rows[:, i0] * (1 - frac)[None, :] + rows[:, i0 + 1] * frac[None, :]
    return cols


def make_grid_images(
    n_per_class: int,
    num_classes: int,
    side: int,
    rng: RngStream,
    contrast: float = 1.0,
    noise: float = 0.12,
) -> Dataset:
    """side x side single-channel images in [0,1]: class template + noise."""
    if side < 4:
        raise ConfigError("side must be at least 4")
    if n_per_class < 1 or num_classes < 2:
        raise ConfigError("need n_per_class >= 1 and num_classes >= 2")
    dim = side * side
    feats, labels = [], []
    for k in range(num_classes):
        coarse = rng.child(f"template-{k}").generator().uniform(-1, 1, size=(4, 4))
        template = _bilinear_resize(coarse, side).ravel()
        gen = rng.child(f"samples-{k}").generator()
        raw = (
            0.5
            + 0.35 * contrast * template
            + noise * gen.normal(size=(n_per_class, dim))
        )
        feats.append(np.clip(raw, 0.0, 1.0))
        labels.append(np.full(n_per_class, k))
    features = np.vstack(feats)
    return Dataset(
        features,
        np.concatenate(labels),
        np.arange(features.shape[0]),
        num_classes,
        feature_range=(0.0, 1.0),
        image_side=side,
    )


@dataclass(frozen=True)
class SplitPlan:
    """Role per example id plus the forget selector.

    Roles: "u" protected (perturbed before training), "c" clean training,
    "t" held-out test, "tr" observation classes kept for utility tracking.
    The clean-counterpart view is derived from the "u" ids, never stored.
    Forget selector: None, {"kind": "classes", "classes": [...]},
    or {"kind": "protected"} (forget exactly the protected rows).
    """

    roles: dict
    forget: dict | None = None
    ratio: float | None = None

    def ids_with_role(self, role: str):
        return np.array(
            sorted(i for i, r in self.roles.items() if r == role), dtype=np.int64
        )

    def validate_against(self, ds: Dataset):
        plan_ids = set(self.roles)
        ds_ids = set(int(i) for i in ds.ids)
        if plan_ids != ds_ids:
            missing = ds_ids - plan_ids
            dangling = plan_ids - ds_ids
            raise SplitError(
                f"plan does not partition the dataset "
                f"(missing={len(missing)}, dangling={len(dangling)})"
            )
        bad = {r for r in self.roles.values() if r not in ROLES}
        if bad:
            raise SplitError(f"unknown roles {sorted(bad)}")

    def save(self, path):
        doc = {
            "roles": {str(i): r for i, r in sorted(self.roles.items())},
            "forget": self.forget,
            "ratio": self.ratio,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SplitPlan":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(
            roles={int(i): r for i, r in doc["roles"].items()},
            forget=doc.get("forget"),
            ratio=doc.get("ratio"),
        )


def make_subset_plan(
    ds: Dataset,
    test_fraction: float,
    protected_fraction: float,
    rng: RngStream,
    target_classes=None,
    forget=None,
) -> SplitPlan:
    """Per class: hold out test rows, then protect the configured fraction.

    Within each target class the protected count is round(fraction * n),
    so the realized ratio is exact up to one example of rounding.
    """
    if not 0 <= protected_fraction <= 1:
        raise ConfigError("protected_fraction must be in [0,1]")
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must be in (0,1)")
    targets = (
        set(range(ds.num_classes)) if target_classes is None else set(target_classes)
    )
    roles = {}
    for k in range(ds.num_classes):
        ids_k = ds.ids[ds.labels == k]
        gen = rng.child(f"split-{k}").generator()
        perm = gen.permutation(len(ids_k))
        n_test = int(round(test_fraction * len(ids_k)))
        test_ids = ids_k[perm[:n_test]]
        train_ids = ids_k[perm[n_test:]]
        for i in test_ids:
            roles[int(i)] = "t"
        n_prot = int(round(protected_fraction * len(train_ids))) if k in targets else 0
        for j, i in enumerate(train_ids):
            roles[int(i)] = "u" if j < n_prot else "c"
    return SplitPlan(roles=roles, forget=forget, ratio=protected_fraction)


def make_class_plan(
    ds: Dataset,
    test_fraction: float,
    protected_classes,
    rng: RngStream,
    observation_classes=(),
    forget=None,
) -> SplitPlan:
    """Whole classes are protected; observation classes tracked separately."""
    protected = set(protected_classes)
    observation = set(observation_classes)
    if protected & observation:
        raise ConfigError("a class cannot be both protected and observation")
    roles = {}
    for k in range(ds.num_classes):
        ids_k = ds.ids[ds.labels == k]
        gen = rng.child(f"split-{k}").generator()
        perm = gen.permutation(len(ids_k))
        n_test = int(round(test_fraction * len(ids_k)))
        for i in ids_k[perm[:n_test]]:
            roles[int(i)] = "t"
        train_role = "u" if k in protected else ("tr" if k in observation else "c")
        for i in ids_k[perm[n_test:]]:
            roles[int(i)] = train_role
    return SplitPlan(roles=roles, forget=forget, ratio=None)


@dataclass(frozen=True)
class SplitViews:
    """The named views the evaluation protocol reports on.

    d_u holds the rows the victim actually trained on for protected ids
    (perturbed when a poisoned dataset is supplied), d_uc their clean
    originals, id-aligned. d_f/d_r partition the training pool.
    """

    d_u: Dataset
    d_uc: Dataset
    d_c: Dataset
    d_t: Dataset
    d_tr: Dataset
    d_f: Dataset
    d_r: Dataset
    train: Dataset

    def as_dict(self) -> dict:
        return {
            "D_u": self.d_u,
            "D_uc": self.d_uc,
            "D_c": self.d_c,
            "D_t": self.d_t,
            "D_tr": self.d_tr,
            "D_f": self.d_f,
            "D_r": self.d_r,
        }


def apply_split(ds: Dataset, plan: SplitPlan, poisoned: Dataset | None = None) -> SplitViews:
    """Materialize the role views; `poisoned` supplies trained-form features.

    `poisoned` must be id-aligned with ds (same ids); only rows with role
    "u" pick up its features. With poisoned=None the protected view equals
    its clean counterpart (the pre-perturbation state).
    """
    plan.validate_against(ds)
    if poisoned is not None:
        if not np.array_equal(poisoned.ids, ds.ids):
            raise SplitError("poisoned dataset must be id-aligned with the source")

    u_ids = plan.ids_with_role("u")
    c_ids = plan.ids_with_role("c")
    t_ids = plan.ids_with_role("t")
    tr_ids = plan.ids_with_role("tr")

    d_uc = ds.by_ids(u_ids)
    d_u = (ds if poisoned is None else poisoned).by_ids(u_ids)
    d_c = ds.by_ids(c_ids)
    d_t = ds.by_ids(t_ids)
    d_tr = ds.by_ids(tr_ids)

    train = d_u.concat(d_c).concat(d_tr)
    f_ids = _forget_ids(train, plan, u_ids)
    d_f = train.by_ids(f_ids)
    keep = ~np.isin(train.ids, f_ids)
    d_r = train.take(np.where(keep)[0])
    return SplitViews(
        d_u=d_u, d_uc=d_uc, d_c=d_c, d_t=d_t, d_tr=d_tr, d_f=d_f, d_r=d_r, train=train
    )


def _forget_ids(train: Dataset, plan: SplitPlan, u_ids) -> np.ndarray:
    sel = plan.forget
    if not sel:
        return np.empty(0, dtype=np.int64)
    kind = sel.get("kind")
    if kind == "classes":
        classes = set(int(c) for c in sel.get("classes", []))
        mask = np.isin(train.labels, sorted(classes))
        return np.sort(train.ids[mask])
    if kind == "protected":
        return np.sort(np.asarray(u_ids, dtype=np.int64))
    raise SplitError(f"unknown forget selector {sel!r}")


def save_dataset(ds: Dataset, path):
    """CSV with header id,label,f0..; floats at 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"f{j}" for j in range(ds.dim)])
        for i in range(len(ds)):
            row = [int(ds.ids[i]), int(ds.labels[i])]
            row += [format(v, ".17g") for v in ds.features[i]]
            writer.writerow(row)


def load_dataset(
    path, num_classes=None, feature_range=None, image_side=None
) -> Dataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id", "label"]:
            raise ShapeError("dataset CSV must start with id,label columns")
        ids, labels, feats = [], [], []
        for row in reader:
            ids.append(int(row[0]))
            labels.append(int(row[1]))
            feats.append([float(v) for v in row[2:]])
    labels = np.array(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if len(labels) else 0
    return Dataset(
        np.array(feats, dtype=np.float64),
        labels,
        np.array(ids, dtype=np.int64),
        num_classes,
        feature_range,
        image_side,
    )


def augment_batch(
    features: np.ndarray,
    mode: str,
    sigma_aug: float,
    gen: np.random.Generator,
    image_side: int | None,
    feature_range: tuple | None,
) -> np.ndarray:
    """Label-preserving augmentation: Gaussian jitter, optional mirror."""
    if mode == "none":
        return features
    out = features + sigma_aug * gen.normal(size=features.shape)
    if mode == "jitter+mirror":
        if image_side is None:
            raise ConfigError("mirror augmentation needs image-shaped data")
        flip = gen.random(features.shape[0]) < 0.5
        imgs = out.reshape(-1, image_side, image_side)
        imgs[flip] = imgs[flip, :, ::-1]
        out = imgs.reshape(features.shape)
    elif mode != "jitter":
        raise ConfigError(f"unknown augmentation mode {mode!r}")
    if feature_range is not None:
        out = np.clip(out, feature_range[0], feature_range[1])
    return out
