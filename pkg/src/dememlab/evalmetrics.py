"""Split-wise accuracy and membership-inference attacks.

Three MIA signals: prediction correctness, true-class softmax confidence,
and negative prediction entropy. The confidence/entropy attacks pick
their threshold by sweeping every observed signal value (both decision
orientations) and reporting the best balanced accuracy, i.e. a
deterministic upper-envelope attacker. Absolute rates are therefore only
meaningful relative to a retrained baseline, which is how reports use them.
"""

from __future__ import annotations

import csv

import numpy as np

from .data import Dataset
from .errors import DomainError
from .model import Classifier, forward, logits
from .rng import RngStream

MIA_VARIANTS = ("corr", "prob", "entro")


def accuracy(clf: Classifier, ds: Dataset) -> float:
    """Top-1 accuracy; argmax ties resolve to the lowest class index."""
    if len(ds) == 0:
        raise DomainError("empty evaluation set")
    pred = np.argmax(logits(clf, ds.features), axis=1)
    return float(np.mean(pred == ds.labels))


def _balanced_sweep(members: np.ndarray, nonmembers: np.ndarray) -> float:
    """Best balanced accuracy over thresholds and both orientations.

    Counts stay integral until one final division, so degenerate cases
    (identical signal multisets) come out at exactly 0.5.
    """
    n_m, n_n = members.size, nonmembers.size
    ms = np.sort(members)
    ns = np.sort(nonmembers)
    thresholds = np.unique(np.concatenate([ms, ns]))

    # member iff signal >= t
    tp_ge = n_m - np.searchsorted(ms, thresholds, side="left")
    tn_ge = np.searchsorted(ns, thresholds, side="left")
    # member iff signal <= t
    tp_le = np.searchsorted(ms, thresholds, side="right")
    tn_le = n_n - np.searchsorted(ns, thresholds, side="right")

    num = np.concatenate([tp_ge * n_n + tn_ge * n_m, tp_le * n_n + tn_le * n_m])
    best = int(num.max()) if num.size else 0
    best = max(best, n_m * n_n)  # degenerate all-member / all-nonmember rules
    return best / (2 * n_m * n_n)


def _signals(clf: Classifier, ds: Dataset, variant: str) -> np.ndarray:
    probs = forward(clf, ds.features)
    if variant == "prob":
        return probs[np.arange(len(ds)), ds.labels]
    if variant == "entro":
        safe = np.clip(probs, 1e-12, 1.0)
        return np.sum(safe * np.log(safe), axis=1)  # negative entropy
    raise DomainError(f"unknown MIA variant {variant!r}")


def mia(
    clf: Classifier,
    members: Dataset,
    nonmembers: Dataset,
    variant: str,
    seed: int = 0,
) -> float:
    """Membership-inference success (balanced accuracy) for one signal.

    The larger side is subsampled (seeded) so both sides weigh equally.
    """
    if variant not in MIA_VARIANTS:
        raise DomainError(f"unknown MIA variant {variant!r}")
    if len(members) == 0 or len(nonmembers) == 0:
        raise DomainError("both member and nonmember sets must be non-empty")

    gen = RngStream(seed).child("mia-balance").generator()
    if len(members) > len(nonmembers):
        keep = gen.permutation(len(members))[: len(nonmembers)]
        members = members.take(np.sort(keep))
    elif len(nonmembers) > len(members):
        keep = gen.permutation(len(nonmembers))[: len(members)]
        nonmembers = nonmembers.take(np.sort(keep))

    if variant == "corr":
        pred_m = np.argmax(logits(clf, members.features), axis=1)
        pred_n = np.argmax(logits(clf, nonmembers.features), axis=1)
        tp = int(np.sum(pred_m == members.labels))
        tn = int(np.sum(pred_n != nonmembers.labels))
        return (tp + tn) / (2 * len(members))

    return _balanced_sweep(
        _signals(clf, members, variant), _signals(clf, nonmembers, variant)
    )


def mia_all(clf, members, nonmembers, seed: int = 0) -> dict:
    return {
        v: mia(clf, members, nonmembers, v, seed=seed) for v in MIA_VARIANTS
    }


def write_eval_csv(rows, path):
    """eval.csv: one row per (model, split) accuracy."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "split", "accuracy"])
        for row in rows:
            writer.writerow(
                [row["model"], row["split"], format(row["accuracy"], ".17g")]
            )


def write_mia_csv(rows, path):
    """mia.csv: model, variant, members_tag, nonmembers_tag, rate, gap_vs_rt."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "variant", "members_tag", "nonmembers_tag", "rate", "gap_vs_rt"]
        )
        for row in rows:
            gap = row.get("gap_vs_rt")
            writer.writerow(
                [
                    row["model"],
                    row["variant"],
                    row["members_tag"],
                    row["nonmembers_tag"],
                    format(row["rate"], ".17g"),
                    "" if gap is None else format(gap, ".17g"),
                ]
            )
