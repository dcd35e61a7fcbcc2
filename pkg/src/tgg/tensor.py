"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation records its parents and a closure that maps
the output gradient to one gradient per parent.  ``backward`` walks the
recorded graph once in reverse topological order.  Gradients accumulate
into ``.grad`` across calls until :meth:`Tensor.zero_grad` (or the
optimizer's ``zero_grad``) clears them.
"""

from __future__ import annotations

import contextlib
import json
import threading
import warnings
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

LEAKY_SLOPE = 0.2
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
PIVOT_RTOL = 1e-12


class TensorError(Exception):
    pass


class DimensionError(TensorError, ValueError):
    pass


class DegenerateRowError(TensorError, ValueError):
    pass


class BatchTooSmallError(TensorError, ValueError):
    pass


class ConditioningError(TensorError, np.linalg.LinAlgError):
    pass


class ContractError(TensorError, ValueError):
    pass


_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording for the current thread."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> Tensor:
        return self.transpose()

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # -- autodiff ---------------------------------------------------------------

    def backward(self) -> None:
        backward(self)

    # -- arithmetic -------------------------------------------------------------

    def __add__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(
            a.data + b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(
            a.data - b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        )

    def __rsub__(self, other) -> Tensor:
        return as_tensor(other) - self

    def __mul__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(
            a.data * b.data,
            (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(
            a.data / b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
        )

    def __rtruediv__(self, other) -> Tensor:
        return as_tensor(other) / self

    def __pow__(self, p: float) -> Tensor:
        a = self
        return Tensor._make(a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1),))

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, idx) -> Tensor:
        a = self

        def _bw(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(a.data[idx], (a,), _bw)

    # -- shape ops --------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        a = self

        def _bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return Tensor._make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), _bw)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        n = self.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> Tensor:
        a = self
        return Tensor._make(a.data.reshape(*shape), (a,), lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes) -> Tensor:
        a = self
        axes = axes or None
        inv = None if axes is None else np.argsort(axes)
        return Tensor._make(
            np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),)
        )

    # -- elementwise ------------------------------------------------------------

    def exp(self) -> Tensor:
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,))

    def log(self) -> Tensor:
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,))

    def tanh(self) -> Tensor:
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), lambda g: (g * (1.0 - out * out),))

    def relu(self) -> Tensor:
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), lambda g: (g * mask,))

    def leaky_relu(self, slope: float = LEAKY_SLOPE) -> Tensor:
        scale = np.where(self.data > 0, 1.0, slope)
        return Tensor._make(self.data * scale, (self,), lambda g: (g * scale,))

    def abs(self) -> Tensor:
        sign = np.sign(self.data)  # subgradient 0 at 0
        return Tensor._make(np.abs(self.data), (self,), lambda g: (g * sign,))

    def softplus(self) -> Tensor:
        x = self.data
        out = np.logaddexp(0.0, x)
        sig = 0.5 * (1.0 + np.tanh(0.5 * x))
        return Tensor._make(out, (self,), lambda g: (g * sig,))

    def sqrt(self) -> Tensor:
        out = np.sqrt(self.data)
        return Tensor._make(out, (self,), lambda g: (0.5 * g / out,))


# -- free-function ops ------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product; ``a`` may carry leading batch axes, ``b`` is 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def _bw(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return Tensor._make(a.data @ b.data, (a, b), _bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, _bw)


def elementwise(x: Tensor, kind: str, slope: float = LEAKY_SLOPE) -> Tensor:
    fns = {
        "relu": Tensor.relu,
        "tanh": Tensor.tanh,
        "exp": Tensor.exp,
        "abs": Tensor.abs,
        "softplus": Tensor.softplus,
    }
    if kind == "leakyrelu":
        return x.leaky_relu(slope)
    if kind not in fns:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return fns[kind](x)


def rowwise_softmax(x, mask=None) -> Tensor:
    """Softmax along the last axis; masked (False) entries are exactly zero."""
    x = as_tensor(x)
    data = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), data.shape)
        empty = ~mask.any(axis=-1)
        if empty.any():
            rows = np.argwhere(empty).tolist()
            raise DegenerateRowError(f"softmax rows fully masked: {rows[:5]}")
        data = np.where(mask, data, -np.inf)
    shifted = data - data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._make(out, (x,), _bw)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    p = np.exp(out)
    return Tensor._make(out, (x,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


@dataclass
class BatchNormState:
    """Learned scale/shift plus running statistics for one feature block."""

    dim: int
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM
    gamma: Tensor = field(init=False)
    beta: Tensor = field(init=False)
    running_mean: np.ndarray = field(init=False)
    running_var: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gamma = Tensor(np.ones(self.dim), requires_grad=True)
        self.beta = Tensor(np.zeros(self.dim), requires_grad=True)
        self.running_mean = np.zeros(self.dim)
        self.running_var = np.ones(self.dim)


def batch_norm(x: Tensor, state: BatchNormState, training: bool = True) -> Tensor:
    """Column-wise batch normalization of an ``[n, d]`` tensor."""
    x = as_tensor(x)
    gamma, beta = state.gamma, state.beta
    if not training:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        return (x - Tensor(state.running_mean)) * Tensor(inv) * gamma + beta
    n = x.shape[0]
    if n < 2:
        raise BatchTooSmallError(f"batch_norm in train mode needs n >= 2, got {n}")
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mu) * inv
    m = state.momentum
    state.running_mean = (1 - m) * state.running_mean + m * mu
    state.running_var = (1 - m) * state.running_var + m * var * n / (n - 1)
    out = xhat * gamma.data + beta.data

    def _bw(g):
        gxhat = g * gamma.data
        gx = inv / n * (n * gxhat - gxhat.sum(0) - xhat * (gxhat * xhat).sum(0))
        return gx, (g * xhat).sum(0), g.sum(0)

    return Tensor._make(out, (x, gamma, beta), _bw)


def linear_solve(M, B, pivot_rtol: float = PIVOT_RTOL) -> Tensor:
    """Solve ``M X = B`` by LU with partial pivoting; never forms ``M^-1``."""
    M, B = as_tensor(M), as_tensor(B)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or B.shape[0] != M.shape[0]:
        raise DimensionError(f"linear_solve shape mismatch: M {M.shape}, B {B.shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M.data, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = np.linalg.norm(M.data, ord=np.inf)
    if pivots.min() <= pivot_rtol * max(scale, np.finfo(float).tiny):
        raise ConditioningError(
            f"matrix is singular or ill-conditioned: smallest pivot {pivots.min():.3e} "
            f"vs threshold {pivot_rtol * scale:.3e}"
        )
    X = scipy.linalg.lu_solve((lu, piv), B.data)

    def _bw(g):
        lam = scipy.linalg.lu_solve((lu, piv), g, trans=1)
        gm = -(lam.reshape(len(lam), -1) @ X.reshape(len(X), -1).T)
        return gm, lam

    return Tensor._make(X, (M, B), _bw)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tracked ``t``."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            pending[key] = pg if key not in pending else pending[key] + pg


# -- finite differences ---------------------------------------------------------


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5, index=None) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. ``param`` (all or selected entries)."""
    flat = param.data.reshape(-1)
    out = np.zeros_like(flat)
    idxs = range(flat.size) if index is None else index
    with no_grad():
        for i in idxs:
            old = flat[i]
            flat[i] = old + h
            fp = fn().item()
            flat[i] = old - h
            fm = fn().item()
            flat[i] = old
            out[i] = (fp - fm) / (2 * h)
    return out.reshape(param.shape)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm(np.ravel(a) - np.ravel(b))
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(num / den)


def gradcheck(fn: Callable[[], Tensor], params: Iterable[Tensor], h: float = 1e-5, max_entries: int | None = None, seed: int = 0) -> float:
    """Worst relative error between autodiff and central differences over ``params``."""
    params = list(params)
    for p in params:
        p.grad = None
    fn().backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        if max_entries is not None and p.size > max_entries:
            idx = np.sort(rng.choice(p.size, size=max_entries, replace=False))
            num = numerical_grad(fn, p, h, idx).reshape(-1)[idx]
            worst = max(worst, relative_error(analytic.reshape(-1)[idx], num))
        else:
            worst = max(worst, relative_error(analytic, numerical_grad(fn, p, h)))
    return worst


# -- checkpoints -------------------------------------------------------------------


def save_arrays(path, arrays: Mapping[str, np.ndarray], extra: Mapping | None = None) -> None:
    """Write ``{name: {shape, values}}`` JSON; floats use shortest round-trip repr."""
    doc = {name: {"shape": list(np.shape(a)), "values": np.ravel(a).astype(float).tolist()} for name, a in arrays.items()}
    if extra:
        doc.update({f"__{k}__": v for k, v in extra.items()})
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path) as fh:
        doc = json.load(fh)
    arrays, extra = {}, {}
    for name, entry in doc.items():
        if name.startswith("__") and name.endswith("__"):
            extra[name[2:-2]] = entry
            continue
        arrays[name] = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
    return arrays, extra
