"""Learned instance edges, graph convolution refinement and the structural regularizer."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .nn import Module, glorot
from .tensor import Tensor, as_tensor, concat


class EdgeLearner(Module):
    """Gaussian kernel over a learned non-negative distance of ``|h_v - h_u|``.

    The distance is ``softplus(w2) . relu(W1 x)``: non-negative and exactly zero
    at ``x = 0``, so identical embeddings always get weight 1.
    """

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator, delta: float = 1.0):
        if delta <= 0:
            raise ValueError(f"bandwidth must be positive, got {delta}")
        self.W1 = glorot(rng, d_in, hidden)
        # softplus(-2) ~ 0.13 keeps initial distances O(1) for unit-scale inputs
        self.w2 = Tensor(np.full(hidden, -2.0), requires_grad=True)
        self.delta = delta

    def phi(self, diff) -> Tensor:
        """Distance for a ``[..., d]`` batch of absolute differences."""
        diff = as_tensor(diff)
        hidden = (diff @ self.W1).relu()
        return (hidden @ self.w2.softplus().reshape(-1, 1)).reshape(*diff.shape[:-1])


def edge_features(H, learner: EdgeLearner) -> Tensor:
    """Dense ``[n, n]`` adjacency ``exp(-phi(|h_v - h_u|) / (2 delta^2))``, symmetric."""
    H = as_tensor(H)
    n, d = H.shape
    if n < 2:
        raise ValueError("edge generation needs at least two nodes")
    diff = (H.reshape(n, 1, d) - H.reshape(1, n, d)).abs()
    A = (learner.phi(diff) * (-1.0 / (2 * learner.delta**2))).exp()
    # |.| is symmetric, but float reductions are not always; average to make it exact
    return (A + A.T) * 0.5


def normalized_adjacency(A) -> Tensor:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree of ``A + I``."""
    A = as_tensor(A)
    n = A.shape[0]
    At = A + Tensor(np.eye(n))
    dinv = At.sum(axis=1) ** -0.5
    return At * dinv.reshape(n, 1) * dinv.reshape(1, n)


def gcn_layer(H, A, W, activation: bool = True) -> Tensor:
    out = normalized_adjacency(A) @ (as_tensor(H) @ W)
    return out.relu() if activation else out


class GCN(Module):
    def __init__(self, d_in: int, dims: Sequence[int], rng: np.random.Generator):
        sizes = [d_in, *dims]
        self.weights = [glorot(rng, a, b) for a, b in zip(sizes, sizes[1:])]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, H, A) -> Tensor:
        for W in self.weights:
            H = gcn_layer(H, A, W)
        return H


def one_hot(labels: np.ndarray, n_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels)
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def soft_wl_embedding(A, onehots: np.ndarray, r: int = 2) -> Tensor:
    """Differentiable label-histogram descriptor.

    ``F`` starts at the class one-hots and is smoothed ``r`` times by the
    row-normalized ``A + I``; each step contributes the column means of ``F``.
    """
    if r < 1:
        raise ValueError(f"iteration count must be >= 1, got {r}")
    A = as_tensor(A)
    n = A.shape[0]
    At = A + Tensor(np.eye(n))
    P = At / At.sum(axis=1, keepdims=True)
    F = Tensor(onehots)
    parts = []
    for _ in range(r):
        F = P @ F
        parts.append(F.sum(axis=0) * (1.0 / n))
    return concat(parts, axis=0)


def lift_template(class_weights: np.ndarray, node_classes: np.ndarray) -> np.ndarray:
    """Instance-level adjacency from class weights; same-class pairs get 1.

    ``class_weights`` is the prototype subgraph over the episode's classes and
    ``node_classes`` index into it.  The off-diagonal class weights are
    rescaled so the strongest one is 1.
    """
    w = np.array(class_weights, dtype=float)
    np.fill_diagonal(w, 0.0)
    top = w.max(initial=0.0)
    if top > 0:
        w = w / top
    np.fill_diagonal(w, 1.0)
    return w[node_classes[:, None], node_classes[None, :]]


def kernel_loss(A_L, class_weights: np.ndarray, node_classes: np.ndarray, r: int = 2) -> Tensor:
    """Squared distance between descriptors of ``A_L`` and of the lifted class template."""
    node_classes = np.asarray(node_classes)
    onehots = one_hot(node_classes, len(class_weights))
    target = soft_wl_embedding(lift_template(class_weights, node_classes), onehots, r).data
    diff = soft_wl_embedding(A_L, onehots, r) - Tensor(target)
    return (diff * diff).sum()


def descriptor_distance(A, B, onehots: np.ndarray, r: int = 2) -> Tensor:
    diff = soft_wl_embedding(A, onehots, r) - soft_wl_embedding(B, onehots, r)
    return (diff * diff).sum()
