import numpy as np
import pytest

from dememlab.data import Dataset
from dememlab.rng import RngStream


def tiny_dataset(n=12, dim=3, num_classes=3, seed=7, feature_range=None, side=None):
    gen = RngStream(seed).child("tiny").generator()
    feats = gen.normal(size=(n, dim))
    if feature_range is not None:
        feats = np.clip(
            feature_range[0] + (feature_range[1] - feature_range[0]) * gen.random((n, dim)),
            *feature_range,
        )
    labels = np.arange(n) % num_classes
    return Dataset(
        feats, labels, np.arange(n), num_classes,
        feature_range=feature_range, image_side=side,
    )


def ridge_closed_form(features, labels, num_classes, lam):
    """Exact minimizer of mean 0.5||Wx+b - onehot||^2 + lam/2 ||theta||^2.

    Independent oracle for the Newton-removal tests: solves the normal
    equations on the bias-augmented design matrix.
    """
    n, d = features.shape
    xt = np.hstack([features, np.ones((n, 1))])
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), labels] = 1.0
    gram = xt.T @ xt / n + lam * np.eye(d + 1)
    theta = np.linalg.solve(gram, xt.T @ onehot / n)
    return theta[:d], theta[d]  # (W, b)


@pytest.fixture
def rng():
    return RngStream(2024)
