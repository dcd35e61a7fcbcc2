"""Attribute-conditioned Gaussian feature synthesizer for unseen classes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataio import Dataset, SchemaError
from .tensor import load_arrays, save_arrays

DEFAULT_RIDGE = 1e-3


class UnderdeterminedWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ConditionalSynthesizer:
    mapping: np.ndarray  # [d, m]: attribute -> feature mean
    noise: np.ndarray  # [d] pooled within-class standard deviation
    attributes: np.ndarray  # [C, m] conditioning vectors per class
    residual: float
    underdetermined: bool = False

    def mean(self, class_id: int) -> np.ndarray:
        if not 0 <= class_id < len(self.attributes):
            raise SchemaError(f"no attribute row for class {class_id}")
        return self.mapping @ self.attributes[class_id]

    def sample(self, class_id: int, count: int, seed=None) -> np.ndarray:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        mu = self.mean(class_id)
        return mu + rng.standard_normal((count, len(mu))) * self.noise


def fit(ds: Dataset, ridge: float = DEFAULT_RIDGE, split: str = "train") -> ConditionalSynthesizer:
    """Ridge regression of seen class means on class attributes, plus pooled noise."""
    idx = ds.split(split)
    classes = [c for c in sorted(ds.seen_classes) if np.any(ds.labels[idx] == c)]
    if not classes:
        raise ValueError("fit needs seen-class training instances")
    means, resid = [], []
    for c in classes:
        x = ds.features[idx[ds.labels[idx] == c]]
        means.append(x.mean(axis=0))
        resid.append(x - x.mean(axis=0))
    means = np.stack(means)
    A = ds.attributes[classes]
    rank = np.linalg.matrix_rank(A)
    under = len(classes) < A.shape[1] or rank < A.shape[1]
    if under:
        warnings.warn(
            f"{len(classes)} seen classes for attribute dimension {A.shape[1]} (rank {rank}); relying on ridge",
            UnderdeterminedWarning,
            stacklevel=2,
        )
    lam = ridge if ridge > 0 or not under else DEFAULT_RIDGE
    mapping = np.linalg.solve(A.T @ A + lam * np.eye(A.shape[1]), A.T @ means).T
    resid = np.concatenate(resid)
    dof = max(len(resid) - len(classes), 1)
    noise = np.sqrt((resid**2).sum(axis=0) / dof)
    residual = float(np.linalg.norm(A @ mapping.T - means))
    return ConditionalSynthesizer(mapping, noise, ds.attributes.copy(), residual, under)


def save(s: ConditionalSynthesizer, path, class_names=None) -> None:
    arrays = {"mapping": s.mapping, "noise": s.noise, "attributes": s.attributes}
    extra = {"residual": s.residual, "underdetermined": bool(s.underdetermined)}
    if class_names is not None:
        extra["classes"] = list(class_names)
    save_arrays(path, arrays, extra)


def load(path) -> tuple[ConditionalSynthesizer, list[str] | None]:
    """Synthesizer and the class names stored with it (``None`` if absent)."""
    arrays, extra = load_arrays(path)
    s = ConditionalSynthesizer(
        arrays["mapping"], arrays["noise"], arrays["attributes"], extra["residual"], extra["underdetermined"]
    )
    return s, extra.get("classes")
