"""Closed-form label propagation, dual propagation consistency, and prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .relkernel import normalized_adjacency
from .tensor import Tensor, as_tensor, linear_solve


class ConfigError(ValueError):
    pass


class EpisodeError(ValueError):
    pass


@dataclass(frozen=True)
class LabelMatrix:
    Y: np.ndarray  # [n, C]; labeled rows one-hot, others zero
    labeled: np.ndarray  # [n] bool

    def __post_init__(self):
        rows = self.Y[self.labeled]
        if not np.all(np.isin(rows, (0.0, 1.0))) or not np.all(rows.sum(1) == 1):
            raise ValueError("labeled rows must be one-hot")
        if np.any(self.Y[~self.labeled] != 0):
            raise ValueError("unlabeled rows must be zero")

    @classmethod
    def from_labels(cls, labels: np.ndarray, n_classes: int, labeled: np.ndarray | None = None) -> LabelMatrix:
        labels = np.asarray(labels)
        labeled = np.ones(len(labels), dtype=bool) if labeled is None else np.asarray(labeled, dtype=bool)
        Y = np.zeros((len(labels), n_classes))
        Y[np.flatnonzero(labeled), labels[labeled]] = 1.0
        return cls(Y, labeled)

    def masked(self, mask: np.ndarray) -> LabelMatrix:
        """Keep only the labeled rows selected by ``mask``."""
        keep = self.labeled & np.asarray(mask, dtype=bool)
        return LabelMatrix(self.Y * keep[:, None], keep)


def _check_mu(mu: float) -> None:
    if not 0 < mu < 1:
        raise ConfigError(f"mu must lie in (0, 1), got {mu}")


def propagation_matrix(A, mu: float) -> Tensor:
    """``I - mu S`` for the symmetric-normalized ``S`` of ``A``."""
    _check_mu(mu)
    A = as_tensor(A)
    return Tensor(np.eye(A.shape[0])) - normalized_adjacency(A) * mu


def propagate_closed_form(A, Y, mu: float = 0.5) -> Tensor:
    """``Y* = (I - mu S)^-1 Y`` via an LU solve."""
    Y = Y.Y if isinstance(Y, LabelMatrix) else Y
    return linear_solve(propagation_matrix(A, mu), as_tensor(Y))


def propagate_iterative(A: np.ndarray, Y: np.ndarray, mu: float = 0.5, steps: int = 1000) -> np.ndarray:
    """Fixed-point iteration ``F <- mu S F + Y``; reference for the solve."""
    S = normalized_adjacency(np.asarray(A)).data
    F = np.array(Y, dtype=float)
    for _ in range(steps):
        F = mu * (S @ F) + Y
    return F


def balance_classes(Y_star, Y, ref: float | None = None) -> Tensor:
    """Scale column ``c`` of ``Y*`` by ``ref / n_c``, ``n_c`` = labeled nodes of class ``c``.

    Propagation is linear in ``Y``, so this equals propagating labels whose
    per-class mass is ``ref``.  ``ref`` defaults to the smallest positive count;
    classes without labeled nodes are left unscaled.
    """
    Y = Y.Y if isinstance(Y, LabelMatrix) else np.asarray(Y)
    counts = Y.sum(axis=0)
    if ref is None:
        ref = counts[counts > 0].min() if np.any(counts > 0) else 1.0
    scale = np.where(counts > 0, ref / np.where(counts > 0, counts, 1.0), 1.0)
    return as_tensor(Y_star) * Tensor(scale)


DUAL_FORMS = ("subgraph", "shared")


def dual_propagation_loss(A, Y, seen_mask: np.ndarray, unseen_mask: np.ndarray, mu: float = 0.5, form: str = "subgraph") -> Tensor:
    """Consistency between a seen-side and an unseen-side propagation.

    ``form="subgraph"``: ``||P_S Y - P_U Y||_F^2`` where ``P_S`` propagates over
    the subgraph induced by the seen nodes only and ``P_U`` over the unseen one.
    ``form="shared"``: ``||P Y_S - P Y_U||_F^2`` with one operator over the whole
    graph and the label rows split by domain.  Because seen and unseen classes
    occupy disjoint columns, the shared form reduces to ``||P Y||_F^2``.
    """
    seen_mask = np.asarray(seen_mask, dtype=bool)
    unseen_mask = np.asarray(unseen_mask, dtype=bool)
    if not seen_mask.any() or not unseen_mask.any():
        raise EpisodeError("dual propagation needs both seen and unseen labeled nodes")
    if form not in DUAL_FORMS:
        raise ConfigError(f"dual form must be one of {DUAL_FORMS}, got {form!r}")
    Y = Y.Y if isinstance(Y, LabelMatrix) else np.asarray(Y)
    A = as_tensor(A)
    if form == "shared":
        c = Y.shape[1]
        stacked = np.concatenate([Y * seen_mask[:, None], Y * unseen_mask[:, None]], axis=1)
        both = linear_solve(propagation_matrix(A, mu), Tensor(stacked))
        diff = both[:, :c] - both[:, c:]
    else:
        from_seen = propagate_closed_form(A * Tensor(np.outer(seen_mask, seen_mask).astype(float)), Y, mu)
        from_unseen = propagate_closed_form(A * Tensor(np.outer(unseen_mask, unseen_mask).astype(float)), Y, mu)
        diff = from_seen - from_unseen
    return (diff * diff).sum()


def predict(Y_star, rows=None, scale: float = 1.0) -> np.ndarray:
    """Row-wise softmax of ``scale * Y*`` over the episode classes."""
    Y = Y_star.data if isinstance(Y_star, Tensor) else np.asarray(Y_star)
    if rows is not None:
        Y = Y[np.asarray(rows)]
    z = scale * Y
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)

