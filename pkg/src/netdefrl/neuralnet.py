"""Dense ReLU networks with hand-written reverse mode and Adam.

Two head layouts are supported:

``"q"``
    linear output, one value per action.
``"actor_critic"``
    the last layer emits ``n_actions`` policy logits followed by one state
    value; :meth:`Mlp.policy_value` turns the logits into probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

CHECKPOINT_VERSION = 1
HEADS = ("q", "actor_critic")


class ShapeError(ValueError):
    pass


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _layout(layer_sizes):
    """Shapes and flat offsets of ``[W0, b0, W1, b1, ...]``."""
    shapes = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        shapes.extend(((fan_in, fan_out), (fan_out,)))
    offsets = np.cumsum([0] + [int(np.prod(sh)) for sh in shapes])
    return shapes, offsets


def _views(flat, shapes, offsets):
    return [flat[offsets[i]:offsets[i + 1]].reshape(sh) for i, sh in enumerate(shapes)]


class Mlp:
    """All parameters live in one flat vector; ``weights``/``biases`` are views of it."""

    def __init__(self, layer_sizes, head: str = "q", seed: int | None = 0, zero: bool = False):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ShapeError(f"bad layer sizes {layer_sizes}")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if head == "actor_critic" and layer_sizes[-1] < 2:
            raise ShapeError("actor_critic head needs at least one action plus the value output")
        self.layer_sizes = layer_sizes
        self.head = head
        self._shapes, self._offsets = _layout(layer_sizes)
        self._bind(np.zeros(int(self._offsets[-1])))
        if not zero:
            rng = np.random.default_rng(seed)
            for w in self.weights:
                bound = 1.0 / np.sqrt(w.shape[0])
                w[...] = rng.uniform(-bound, bound, size=w.shape)

    def _bind(self, flat: np.ndarray) -> None:
        self.flat = flat
        views = _views(flat, self._shapes, self._offsets)
        self.weights = views[0::2]
        self.biases = views[1::2]

    # -- parameters -----------------------------------------------------------

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def n_params(self) -> int:
        return self.flat.shape[0]

    def set_params(self, params) -> None:
        if isinstance(params, np.ndarray) and params.ndim == 1:
            if params.shape != self.flat.shape:
                raise ShapeError("flat parameter vector has the wrong length")
            self.flat[...] = params
            return
        params = list(params)
        if len(params) != len(self._shapes):
            raise ShapeError("parameter count does not match the architecture")
        for dst, src in zip(self.params, params):
            if np.shape(src) != dst.shape:
                raise ShapeError("parameter shapes do not match the architecture")
            dst[...] = src

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.layer_sizes = list(self.layer_sizes)
        other.head = self.head
        other._shapes, other._offsets = self._shapes, self._offsets
        other._bind(self.flat.copy())
        return other

    def split(self, flat: np.ndarray) -> list:
        """View a flat vector with this net's parameter shapes."""
        return _views(flat, self._shapes, self._offsets)

    def flatten(self, arrays) -> np.ndarray:
        return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_actions(self) -> int:
        return self.layer_sizes[-1] - (1 if self.head == "actor_critic" else 0)

    # -- passes ---------------------------------------------------------------

    def forward_cached(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_size:
            raise ShapeError(f"input width {x.shape[-1]} != {self.input_size}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w
            h += b
            if i < last:
                np.maximum(h, 0.0, out=h)
            acts.append(h)
        return h, acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Raw last-layer outputs (Q values, or logits + value)."""
        return self.forward_cached(x)[0]

    def backward_flat(self, acts, grad_out: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(grad_out * output)`` as one flat vector."""
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != acts[-1].shape:
            raise ShapeError(f"upstream gradient shape {grad_out.shape} != output shape {acts[-1].shape}")
        flat = np.empty_like(self.flat)
        views = self.split(flat)
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            if a_in.ndim == 1:
                np.multiply.outer(a_in, g, out=views[2 * i])
                views[2 * i + 1][...] = g
            else:
                np.matmul(a_in.T, g, out=views[2 * i])
                g.sum(axis=0, out=views[2 * i + 1])
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        return flat

    def backward_cached(self, acts, grad_out: np.ndarray) -> list:
        return self.split(self.backward_flat(acts, grad_out))

    def q_values(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def policy_value(self, x: np.ndarray):
        out = self.forward(x)
        return softmax(out[..., :-1]), out[..., -1]

    # -- persistence ----------------------------------------------------------

    def save(self, path, optimizer: "Adam | None" = None) -> None:
        arrays = {
            "version": np.array([CHECKPOINT_VERSION], dtype="<i8"),
            "layer_sizes": np.array(self.layer_sizes, dtype="<i8"),
            "head": np.array([HEADS.index(self.head)], dtype="<i8"),
        }
        for i, p in enumerate(self.params):
            arrays[f"p{i}"] = np.ascontiguousarray(p, dtype="<f8")
        if optimizer is not None:
            arrays["opt_scalars"] = np.array([optimizer.lr, optimizer.beta1, optimizer.beta2,
                                              optimizer.eps, optimizer.t], dtype="<f8")
            for i, (m, v) in enumerate(zip(self.split(optimizer.m), self.split(optimizer.v))):
                arrays[f"m{i}"] = np.ascontiguousarray(m, dtype="<f8")
                arrays[f"v{i}"] = np.ascontiguousarray(v, dtype="<f8")
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path, with_optimizer: bool = False):
        with np.load(path) as data:
            if int(data["version"][0]) != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {int(data['version'][0])}")
            m = cls(data["layer_sizes"].tolist(), head=HEADS[int(data["head"][0])], zero=True)
            m.set_params([data[f"p{i}"] for i in range(2 * (len(m.layer_sizes) - 1))])
            opt = None
            if with_optimizer and "opt_scalars" in data:
                lr, b1, b2, eps, t = data["opt_scalars"].tolist()
                opt = Adam(m.params, lr=lr, beta1=b1, beta2=b2, eps=eps)
                opt.t = int(t)
                n = len(m.params)
                opt.m = m.flatten([data[f"m{i}"] for i in range(n)])
                opt.v = m.flatten([data[f"v{i}"] for i in range(n)])
        return (m, opt) if with_optimizer else m


def forward(m: Mlp, x: np.ndarray):
    """Head outputs: the Q vector, or ``(probabilities, value)``."""
    if m.head == "q":
        return m.q_values(x)
    return m.policy_value(x)


def backward(m: Mlp, x: np.ndarray, grad_out: np.ndarray) -> list:
    """Parameter gradients of ``sum(grad_out * m.forward(x))``."""
    _, acts = m.forward_cached(x)
    return m.backward_cached(acts, grad_out)


@dataclass
class Adam:
    """Adaptive-moment optimizer.  Moments are kept as flat vectors."""

    params: list = field(repr=False)
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        p = self.params
        size = p.shape[0] if isinstance(p, np.ndarray) and p.ndim == 1 else sum(int(np.size(x)) for x in p)
        if self.m is None:
            self.m = np.zeros(size)
        if self.v is None:
            self.v = np.zeros(size)
        self.params = None

    def step(self, params, grads) -> None:
        """In-place update.

        ``params`` is either a flat vector (with flat ``grads``) or a list of
        arrays matching ``grads``; lists are updated through a flat copy.
        """
        flat_in = isinstance(params, np.ndarray) and params.ndim == 1
        p = params if flat_in else np.concatenate([x.ravel() for x in params])
        g = grads if isinstance(grads, np.ndarray) and grads.ndim == 1 else np.concatenate(
            [np.asarray(x, dtype=np.float64).ravel() for x in grads])
        if p.shape != g.shape or g.shape != self.m.shape:
            raise ShapeError("gradient does not match optimizer state")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        step = self.lr * np.sqrt(c2) / c1
        kernels.adam_update(p, g, self.m, self.v, step, self.beta1, self.beta2, self.eps * np.sqrt(c2))
        if not flat_in:
            off = 0
            for x in params:
                x[...] = p[off:off + x.size].reshape(x.shape)
                off += x.size


def optimize_step(m: Mlp, grads, opt: Adam) -> None:
    if not (isinstance(grads, np.ndarray) and grads.ndim == 1):
        grads = m.flatten(grads)
    opt.step(m.flat, grads)
