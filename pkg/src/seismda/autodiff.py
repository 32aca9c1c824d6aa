"""Small reverse-mode automatic differentiation engine.

Only the operations needed by the damage networks are provided: valid 1-D
convolution, dense layers, LeakyReLU, flattening, softmax cross-entropy and
the gradient reversal node.  Everything runs in float64 on numpy arrays.

Ops accept either a single sample (``C x L`` for convolutions, ``n`` for
dense layers) or a batch with a leading sample axis.  A graph is recorded
implicitly through parent links; :class:`Graph` linearises it for the
backward sweep.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, DimensionError, TrainingError

_node_ids = itertools.count()

CHECKPOINT_VERSION = 1


class Tensor:
    """Dense float64 array that may take part in a recorded computation."""

    __slots__ = ("data", "requires_grad", "name", "op", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = "leaf"
        self._parents = ()
        self._backward = None
        self._id = next(_node_ids)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def numpy(self):
        return self.data

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, parents, backward, op):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out.op = op
    out._id = next(_node_ids)
    live = tuple(p for p in parents if p.requires_grad)
    out.requires_grad = bool(live)
    if live:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


@dataclass
class Graph:
    """Nodes reachable from an output, in topological (creation) order."""

    nodes: list = field(default_factory=list)

    @classmethod
    def trace(cls, output: Tensor) -> "Graph":
        seen = {}
        stack = [output]
        while stack:
            node = stack.pop()
            if node._id in seen or not node.requires_grad:
                continue
            seen[node._id] = node
            stack.extend(node._parents)
        # ids grow monotonically, so every input precedes its consumers
        return cls(nodes=sorted(seen.values(), key=lambda n: n._id))

    def __len__(self):
        return len(self.nodes)


def backward(loss: Tensor, params=None):
    """Gradients of a scalar ``loss``.

    ``params`` may be a mapping ``name -> Tensor`` (returns a dict keyed by
    name), a sequence of tensors (returns a list) or ``None`` (returns a dict
    keyed by the names of every named leaf reached).  Parameters the loss
    does not depend on get zero gradients.
    """
    if loss.size != 1:
        raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = Graph.trace(loss)
    pending = {loss._id: np.ones_like(loss.data)}
    leaf_grads = {}
    for node in reversed(graph.nodes):
        g = pending.pop(node._id, None)
        if g is None:
            continue
        if node._backward is None:
            leaf_grads[node._id] = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = pending.get(parent._id)
            pending[parent._id] = pg if prev is None else prev + pg

    def grad_of(t):
        g = leaf_grads.get(t._id)
        return np.zeros_like(t.data) if g is None else g

    if params is None:
        return {n.name: leaf_grads[n._id] for n in graph.nodes
                if n._backward is None and n.name is not None and n._id in leaf_grads}
    if isinstance(params, dict):
        return {name: grad_of(t) for name, t in params.items()}
    return [grad_of(t) for t in params]


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and b.size != 1 and a.size != 1:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")

    def _reduce(g, shape):
        return g if g.shape == shape else np.sum(g).reshape(shape)

    def bw(g):
        return _reduce(g, a.shape), _reduce(g, b.shape)

    return _record(a.data + b.data, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return _record(a.data * c, (a,), lambda g: (g * c,), "scale")
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} differ")
    return _record(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def tsum(x: Tensor) -> Tensor:
    return _record(np.sum(x.data).reshape(()), (x,),
                   lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def weighted_sum(terms, coeffs) -> Tensor:
    """``sum_i coeffs[i] * terms[i]`` for scalar tensors."""
    if len(terms) != len(coeffs):
        raise DimensionError(f"{len(terms)} terms but {len(coeffs)} coefficients")
    coeffs = [float(c) for c in coeffs]
    value = sum(c * t.data for c, t in zip(coeffs, terms))
    return _record(np.asarray(value, dtype=np.float64), tuple(terms),
                   lambda g: tuple(g * c for c in coeffs), "weighted_sum")


def concat(tensors, axis=0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), bw, "concat")


# --------------------------------------------------------------------- layers

def conv_output_length(length: int, kernel: int, stride: int) -> int:
    if kernel > length:
        raise DimensionError(f"kernel {kernel} longer than input {length}")
    return (length - kernel) // stride + 1


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid (unpadded) strided 1-D convolution.

    ``x`` is ``C_in x L`` or ``N x C_in x L``; ``kernels`` is
    ``C_out x C_in x k``.
    """
    if stride < 1:
        raise ArgumentError(f"stride must be >= 1, got {stride}")
    single = x.ndim == 2
    xd = x.data[None] if single else x.data
    if xd.ndim != 3:
        raise DimensionError(f"conv1d expects C x L or N x C x L input, got {x.shape}")
    n, c_in, length = xd.shape
    c_out, c_w, k = kernels.shape
    if c_w != c_in:
        raise DimensionError(f"kernels expect {c_w} input channels, input has {c_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"bias shape {bias.shape} does not match {c_out} kernels")
    l_out = conv_output_length(length, k, stride)

    windows = sliding_window_view(xd, k, axis=2)[:, :, : stride * (l_out - 1) + 1 : stride]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(n * l_out, c_in * k)
    wmat = kernels.data.reshape(c_out, c_in * k)
    out = (cols @ wmat.T).reshape(n, l_out, c_out).transpose(0, 2, 1) + bias.data[None, :, None]
    out = np.ascontiguousarray(out)

    def bw(g):
        g3 = g[None] if single else g
        g2 = g3.transpose(0, 2, 1).reshape(n * l_out, c_out)
        gw = (g2.T @ cols).reshape(kernels.shape)
        gb = g3.sum(axis=(0, 2))
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, l_out, c_in, k)
            gx = np.zeros_like(xd)
            stop = stride * (l_out - 1) + 1
            for t in range(k):
                gx[:, :, t : t + stop : stride] += dcols[:, :, :, t].transpose(0, 2, 1)
            if single:
                gx = gx[0]
        return gx, gw, gb

    return _record(out[0] if single else out, (x, kernels, bias), bw, "conv1d")


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``weights @ x + bias`` for ``x`` of shape ``n`` or ``N x n``."""
    m, n_in = weights.shape
    if x.shape[-1] != n_in or x.ndim not in (1, 2):
        raise DimensionError(f"dense: weights {weights.shape} incompatible with input {x.shape}")
    if bias.shape != (m,):
        raise DimensionError(f"dense: bias {bias.shape} does not match {m} outputs")
    out = x.data @ weights.data.T + bias.data

    def bw(g):
        if x.ndim == 1:
            return g @ weights.data, np.outer(g, x.data), g
        return g @ weights.data, g.T @ x.data, g.sum(axis=0)

    return _record(out, (x, weights, bias), bw, "dense")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ArgumentError(f"LeakyReLU slope must lie in (0, 1), got {slope}")
    factor = np.where(x.data >= 0.0, 1.0, slope)
    return _record(x.data * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def flatten(x: Tensor) -> Tensor:
    """Row-major flatten; a 3-D input keeps its leading batch axis."""
    shape = x.shape
    new = (shape[0], -1) if x.ndim == 3 else (-1,)
    return _record(x.data.reshape(new), (x,), lambda g: (g.reshape(shape),), "flatten")


def grad_reverse(x: Tensor, lam: float) -> Tensor:
    """Identity forward; scales the backward signal by ``-lam``."""
    if lam < 0:
        raise ArgumentError(f"reversal coefficient must be >= 0, got {lam}")
    lam = float(lam)
    return _record(x.data.copy(), (x,), lambda g: (-lam * g,), "grad_reverse")


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    single = logits.ndim == 1
    z = logits.data[None] if single else logits.data
    if z.ndim != 2:
        raise DimensionError(f"logits must be K or N x K, got {logits.shape}")
    n, k = z.shape
    if k < 2:
        raise ArgumentError("cross-entropy needs at least two classes")
    y = np.atleast_1d(np.asarray(labels))
    if y.shape != (n,):
        raise DimensionError(f"{n} logit rows but labels of shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ArgumentError("labels must be integer class indices")
        y = y.astype(np.int64)
    if np.any(y < 0) or np.any(y >= k):
        raise ArgumentError(f"label out of range [0, {k})")

    rows = np.arange(n)
    top = z.argmax(axis=1)
    zmax = z[rows, top]
    e = np.exp(z - zmax[:, None])
    e_rest = e.copy()
    e_rest[rows, top] = 0.0
    rest = e_rest.sum(axis=1)
    # log1p keeps confident losses accurate (e.g. ~2e-9)
    losses = np.log1p(rest) + zmax - z[rows, y]
    probs = e / (1.0 + rest)[:, None]

    def bw(g):
        grad = probs.copy()
        grad[rows, y] -= 1.0
        grad *= g / n
        return (grad[0] if single else grad,)

    return _record(np.asarray(losses.mean()), (logits,), bw, "softmax_cross_entropy")


# ------------------------------------------------------------------ optimiser

class Adam:
    """Adam with bias correction and coupled L2 weight decay.

    Holds the per-parameter moment accumulators for the tensors in
    ``params`` (a ``name -> Tensor`` mapping) and updates them in place.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = 0

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        if lr <= 0:
            raise ArgumentError(f"learning rate must be positive, got {lr}")
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return self.params


def adam_step(state: Adam, grads, lr=None):
    return state.step(grads, lr)


# ------------------------------------------------------------- init and I/O

def init_uniform(shape, fan_in, rng) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def save_params(path, params) -> None:
    """Write ``name -> Tensor|array`` to an ``.npz`` file (bit-exact)."""
    arrays = {f"p:{k}": np.asarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64)
              for k, v in params.items()}
    arrays["__version__"] = np.array(CHECKPOINT_VERSION)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path) -> dict:
    with np.load(Path(path), allow_pickle=False) as z:
        version = int(z["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ArgumentError(f"unsupported checkpoint version {version}")
        return {k[2:]: z[k].copy() for k in z.files if k.startswith("p:")}
