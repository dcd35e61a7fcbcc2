"""Attention-based aggregate network over sampled instance neighborhoods.

Each layer transforms node states with a shared linear map and then averages
two attention heads over the sampled neighbors: a learned instance head
(additive attention on the concatenated pair of transformed states) and a
class head read off the prototype graph.  Batch norm and ReLU follow.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .nn import Module, glorot
from .protograph import PrototypeGraph, class_attention
from .tensor import LEAKY_SLOPE, BatchNormState, Tensor, as_tensor, batch_norm, rowwise_softmax


class ConnectivityError(ValueError):
    pass


@dataclass(frozen=True)
class EpisodeNeighborhood:
    neighbors: tuple[np.ndarray, ...]  # one [n, s_k] index table per hop
    node_classes: np.ndarray
    seed: int | None

    @property
    def hops(self) -> int:
        return len(self.neighbors)


def cosine_knn(features: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` most cosine-similar other rows, per row."""
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    unit = features / np.where(norms > 0, norms, 1.0)
    sim = unit @ unit.T
    np.fill_diagonal(sim, -np.inf)
    k = min(k, len(features) - 1)
    return np.argsort(-sim, axis=1, kind="stable")[:, :k]


def build_initial_instance_graph(
    features: np.ndarray,
    node_classes: np.ndarray,
    g: PrototypeGraph,
    k_nn: int,
    include_self: bool = True,
    same_class: bool = False,
) -> list[np.ndarray]:
    """Candidate neighbor sets: cosine kNN plus prototype-graph class links.

    ``g`` is expected to be cropped already: every positive weight between two
    different classes links all their instances, and ``same_class`` also links
    instances of the same class.  The union is closed under symmetry; with
    ``include_self`` every node is also its own candidate.
    """
    n = len(features)
    if n < 2 and not include_self:
        raise ConnectivityError("an instance graph needs at least two nodes")
    adj = np.zeros((n, n), dtype=bool)
    if n >= 2 and k_nn > 0:
        knn = cosine_knn(features, k_nn)
        adj[np.repeat(np.arange(n), knn.shape[1]), knn.ravel()] = True
    adj |= g.weights[node_classes[:, None], node_classes[None, :]] > 0
    if same_class:
        adj |= node_classes[:, None] == node_classes[None, :]
    adj |= adj.T
    np.fill_diagonal(adj, include_self)
    return [np.flatnonzero(row) for row in adj]


def sample_neighbors(candidates: Sequence[np.ndarray], sizes: Sequence[int], seed, node_classes=None) -> EpisodeNeighborhood:
    """Uniformly sample a fixed-size neighbor list per node and hop.

    Sampling is without replacement when a node has at least ``size``
    candidates, with replacement otherwise.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for v, c in enumerate(candidates):
        if len(c) == 0:
            raise ConnectivityError(f"node {v} has no neighbor candidates")
    tables = []
    for size in sizes:
        rows = []
        for c in candidates:
            rows.append(rng.choice(c, size=size, replace=len(c) < size))
        tables.append(np.asarray(rows, dtype=np.int64).reshape(len(candidates), size))
    classes = np.zeros(len(candidates), dtype=np.int64) if node_classes is None else np.asarray(node_classes)
    return EpisodeNeighborhood(tuple(tables), classes, seed if isinstance(seed, (int, np.integer)) else None)


def instance_attention(z: Tensor, neighbors: np.ndarray, att: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    """Attention of every node over its neighbor table: softmax_j LeakyReLU(a . [z_v, z_j])."""
    z, att = as_tensor(z), as_tensor(att)
    d = z.shape[1]
    if att.shape != (2 * d,):
        raise ValueError(f"attention vector has shape {att.shape}, expected ({2 * d},)")
    own = (z @ att[:d].reshape(d, 1)).reshape(-1, 1)
    other = (z @ att[d:].reshape(d, 1)).reshape(-1)
    scores = (own + other[neighbors]).leaky_relu(slope)
    return rowwise_softmax(scores)


class AggregateLayer(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, slope: float = LEAKY_SLOPE):
        self.W = glorot(rng, d_in, d_out)
        self.att = Tensor(rng.normal(0.0, np.sqrt(1.0 / d_out), size=2 * d_out), requires_grad=True)
        self.bn = BatchNormState(d_out)
        self.slope = slope

    @property
    def d_out(self) -> int:
        return self.W.shape[1]

    def forward(self, h: Tensor, neighbors: np.ndarray, class_weights: np.ndarray | None, attention: bool = True) -> Tensor:
        z = as_tensor(h) @ self.W
        if attention:
            alpha = instance_attention(z, neighbors, self.att, self.slope)
            if class_weights is not None:
                alpha = (alpha + Tensor(class_weights)) * 0.5
        else:
            alpha = Tensor(np.full(neighbors.shape, 1.0 / neighbors.shape[1]))
        n, s = neighbors.shape
        mixed = (z[neighbors] * alpha.reshape(n, s, 1)).sum(axis=1)
        return batch_norm(mixed, self.bn, training=self.training).relu()


def class_head_weights(g: PrototypeGraph, node_classes: np.ndarray, neighbors: np.ndarray, same_class_weight: float = 0.0) -> np.ndarray:
    """Softmax over each node's neighbors of the prototype weight between their classes."""
    if not same_class_weight:
        return class_attention(g, node_classes, neighbors)
    raw = g.weights[node_classes[:, None], node_classes[neighbors]]
    raw = np.where(node_classes[:, None] == node_classes[neighbors], same_class_weight, raw)
    e = np.exp(raw - raw.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class AggregateNetwork(Module):
    def __init__(self, d_in: int, dims: Sequence[int], rng: np.random.Generator, slope: float = LEAKY_SLOPE):
        sizes = [d_in, *dims]
        self.layers = [AggregateLayer(a, b, rng, slope) for a, b in zip(sizes, sizes[1:])]

    @property
    def d_out(self) -> int:
        return self.layers[-1].d_out

    def forward(
        self,
        x,
        nb: EpisodeNeighborhood,
        g: PrototypeGraph,
        attention: bool = True,
        same_class_weight: float = 0.0,
    ) -> Tensor:
        if nb.hops != len(self.layers):
            raise ValueError(f"{len(self.layers)} layers but {nb.hops} sampled hops")
        h = as_tensor(x)
        for layer, table in zip(self.layers, nb.neighbors):
            cw = class_head_weights(g, nb.node_classes, table, same_class_weight) if attention else None
            h = layer.forward(h, table, cw, attention)
        return h
