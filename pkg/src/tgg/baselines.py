"""Reference classifiers used to calibrate the synthetic experiments."""

from __future__ import annotations

import numpy as np

from .dataio import Dataset


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(n > 0, n, 1.0)


def nearest_class_mean(ds: Dataset, split: str = "test_seen", classes=None) -> float:
    """Euclidean nearest train-split class mean, restricted to ``classes`` (default seen)."""
    classes = np.asarray(sorted(ds.seen_classes if classes is None else classes))
    train = ds.split("train")
    means = np.stack([ds.features[train][ds.labels[train] == c].mean(0) for c in classes])
    idx = ds.split(split)
    d = ((ds.features[idx][:, None, :] - means[None]) ** 2).sum(-1)
    return float(np.mean(classes[d.argmin(1)] == ds.labels[idx]))


def attribute_regressor(ds: Dataset, ridge: float = 1.0) -> np.ndarray:
    """Ridge map ``[d, m]`` from features to class attributes, fit on seen train rows."""
    train = ds.split("train")
    train = train[np.isin(ds.labels[train], list(ds.seen_classes))]
    X, A = ds.features[train], ds.attributes[ds.labels[train]]
    return np.linalg.solve(X.T @ X + ridge * np.eye(X.shape[1]), X.T @ A)


def nearest_attribute_prototype(ds: Dataset, split: str = "test_unseen", ridge: float = 1.0) -> float:
    """Project features into attribute space; pick the cosine-nearest unseen class attribute."""
    W = attribute_regressor(ds, ridge)
    unseen = np.asarray(sorted(ds.unseen_classes))
    idx = ds.split(split)
    sim = _unit(ds.features[idx] @ W) @ _unit(ds.attributes[unseen]).T
    return float(np.mean(unseen[sim.argmax(1)] == ds.labels[idx]))
