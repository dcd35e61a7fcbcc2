"""Class-level prototype graph: construction, cropping and class attention."""

from __future__ import annotations

import csv
import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .dataio import SchemaError


class DegenerateClassError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PrototypeGraph:
    class_ids: tuple[str, ...]
    weights: np.ndarray  # [C, C] symmetric, entries in [0, 1], zero diagonal

    def __post_init__(self):
        w = self.weights
        if w.shape != (len(self.class_ids),) * 2:
            raise ValueError(f"weights shape {w.shape} does not match {len(self.class_ids)} classes")
        if not np.array_equal(w, w.T) or np.any(np.diag(w) != 0) or w.min() < 0 or w.max() > 1:
            raise ValueError("prototype weights must be symmetric, in [0, 1], with zero diagonal")

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights)))

    def index(self, name: str) -> int:
        try:
            return self.class_ids.index(name)
        except ValueError:
            raise SchemaError(f"class {name!r} not in prototype graph") from None

    def subgraph(self, classes: Sequence[int]) -> np.ndarray:
        """Weights restricted to ``classes`` (integer positions), in that order."""
        classes = np.asarray(classes)
        return self.weights[np.ix_(classes, classes)]

    def to_edge_list(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t")
            rows, cols = np.nonzero(np.triu(self.weights))
            for i, j in zip(rows, cols):
                w.writerow([self.class_ids[i], self.class_ids[j], repr(float(self.weights[i, j]))])


def _finish(class_ids, w: np.ndarray) -> PrototypeGraph:
    w = np.maximum(w, w.T)
    np.fill_diagonal(w, 0.0)
    return PrototypeGraph(tuple(class_ids), w)


def from_edge_list(path, class_ids: Sequence[str]) -> PrototypeGraph:
    """Read ``class_a<TAB>class_b<TAB>weight`` rows.

    Directed duplicates collapse to their maximum weight, then everything is
    divided by the largest weight.
    """
    pos = {c: i for i, c in enumerate(class_ids)}
    w = np.zeros((len(class_ids), len(class_ids)))
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 3 tab-separated fields")
            a, b, raw = row
            for c in (a, b):
                if c not in pos:
                    raise SchemaError(f"{path}:{lineno}: unknown class {c!r}")
            weight = float(raw)
            if weight < 0:
                raise ValueError(f"{path}:{lineno}: negative edge weight {weight}")
            i, j = pos[a], pos[b]
            w[i, j] = max(w[i, j], weight)
    np.fill_diagonal(w, 0.0)
    top = w.max(initial=0.0)
    if top == 0:
        warnings.warn(f"{path}: no edges; prototype graph is empty", stacklevel=2)
    else:
        w = w / top
    return _finish(class_ids, w)


def from_attributes(attributes: np.ndarray, class_ids: Sequence[str] | None = None) -> PrototypeGraph:
    """Sum of the Hadamard product of attribute rows, scaled by row norms, clamped to [0, 1]."""
    attributes = np.asarray(attributes, dtype=float)
    norms = np.linalg.norm(attributes, axis=1)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0).tolist()
        raise DegenerateClassError(f"zero attribute rows for classes {bad}")
    unit = attributes / norms[:, None]
    sim = np.clip((unit[:, None, :] * unit[None, :, :]).sum(-1), 0.0, 1.0)
    sim = 0.5 * (sim + sim.T)
    if class_ids is None:
        class_ids = [str(i) for i in range(len(attributes))]
    return _finish(class_ids, sim)


def crop(g: PrototypeGraph, threshold: float) -> PrototypeGraph:
    """Zero every edge whose weight is strictly below ``threshold``."""
    w = np.where(g.weights >= threshold, g.weights, 0.0)
    return PrototypeGraph(g.class_ids, w)


def class_attention_row(g: PrototypeGraph, v_class: int, neighbor_classes: Sequence[int]) -> np.ndarray:
    """Softmax of prototype weights between ``v_class`` and each neighbor's class.

    An all-zero row yields uniform weights.
    """
    raw = g.weights[v_class, np.asarray(neighbor_classes)]
    e = np.exp(raw - raw.max())
    return e / e.sum()


def class_attention(g: PrototypeGraph, node_classes: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Vectorized :func:`class_attention_row` for an ``[n, s]`` neighbor table."""
    raw = g.weights[node_classes[:, None], node_classes[neighbors]]
    e = np.exp(raw - raw.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)
