"""Minimal reverse-mode differentiation tape over numpy arrays.

A :class:`Var` wraps an array. Variables created through :meth:`Tape.param`
(or derived from them) are recorded; everything else evaluates eagerly with
no bookkeeping, so the model code runs unchanged for inference.

Spiking neurons use the straight-through estimator: ``dS/dU = 1/D`` inside
``[-0.5, D + 0.5]`` and 0 outside.
"""

from __future__ import annotations

import numpy as np

from . import nnops
from .neuron import fire, sigmoid as np_sigmoid, straight_through_grad


class Var:
    __array_priority__ = 1000
    __slots__ = ("value", "tape", "name", "counts", "d_cap")

    def __init__(self, value, tape: "Tape | None" = None, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.name = name
        self.counts = None  # set on neuron outputs
        self.d_cap = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(shape={self.shape}, name={self.name!r}, tracked={self.tape is not None})"


class Tape:
    """Records operations in execution order; backward replays them reversed."""

    def __init__(self):
        self.nodes: list[tuple[Var, tuple[Var, ...], object]] = []
        self.params: dict[str, Var] = {}
        self.grads: dict[str, np.ndarray] = {}

    def param(self, name: str, value) -> Var:
        if name not in self.params:
            self.params[name] = Var(value, self, name)
        return self.params[name]

    def record(self, out: Var, parents, backward) -> Var:
        out.tape = self
        self.nodes.append((out, tuple(parents), backward))
        return out

    def backward(self, seeds) -> dict[str, np.ndarray]:
        """Propagate ``seeds`` (pairs of ``(var, dL/dvar)``) to every parameter.

        Each recorded node is visited once, in reverse recording order (a
        valid reverse topological order). Parameter gradients accumulate into
        :attr:`grads` and are also returned.
        """
        acc: dict[int, np.ndarray] = {}
        for var, g in seeds:
            if var.tape is not None:
                acc[id(var)] = acc.get(id(var), 0) + np.broadcast_to(g, var.shape)
        for out, parents, backward in reversed(self.nodes):
            g = acc.pop(id(out), None)
            if g is None:
                continue
            for parent, pg in zip(parents, backward(g)):
                if pg is None or parent.tape is None:
                    continue
                acc[id(parent)] = acc[id(parent)] + pg if id(parent) in acc else pg
        for name, p in self.params.items():
            if id(p) in acc:
                self.grads[name] = self.grads.get(name, 0) + np.asarray(acc[id(p)])
        return self.grads

    def zero_grad(self):
        self.grads = {}


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _tape_of(*vs) -> Tape | None:
    for v in vs:
        if v.tape is not None:
            return v.tape
    return None


def _make(value, parents, backward) -> Var:
    out = Var(value)
    tape = _tape_of(*parents)
    if tape is not None:
        tape.record(out, parents, backward)
    return out


def unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return _make(a.value + b.value, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def neg(a: Var) -> Var:
    return _make(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return _make(
        a.value * b.value,
        (a, b),
        lambda g: (unbroadcast(g * b.value, a.shape), unbroadcast(g * a.value, b.shape)),
    )


def sigmoid(a: Var) -> Var:
    s = np_sigmoid(a.value)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


# ---------------------------------------------------------------- shape


def reshape(a: Var, shape) -> Var:
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: Var, i: int, j: int) -> Var:
    return _make(np.swapaxes(a.value, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def broadcast_to(a: Var, shape) -> Var:
    return _make(np.broadcast_to(a.value, shape).copy(), (a,), lambda g: (unbroadcast(g, a.shape),))


def sum(a: Var, axis=None, keepdims: bool = False) -> Var:  # noqa: A001
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _make(a.value.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a: Var, axis=None, keepdims: bool = False) -> Var:
    n = a.value.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum(a, axis, keepdims), 1.0 / n)


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)

    def back(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _make(a.value @ b.value, (a, b), back)


def linear(x: Var, w: Var, b: Var | None = None) -> Var:
    """``x @ w.T + b`` for ``x`` shaped ``[..., in]`` and ``w`` ``[out, in]``."""
    xs = x.value.reshape(-1, x.shape[-1])
    out = xs @ w.value.T
    if b is not None:
        out = out + b.value

    def back(g):
        g2 = g.reshape(-1, w.shape[0])
        gx = (g2 @ w.value).reshape(x.shape)
        gw = g2.T @ xs
        return (gx, gw) + ((g2.sum(axis=0),) if b is not None else ())

    parents = (x, w) if b is None else (x, w, b)
    return _make(out.reshape(x.shape[:-1] + (w.shape[0],)), parents, back)


def conv2d(x: Var, w: Var, b: Var | None, stride: int, pad: int, groups: int) -> Var:
    out = nnops.conv2d_dense(x.value, w.value, None if b is None else b.value, stride, pad, groups)

    def back(g):
        dx, dw, db = nnops.conv2d_dense_backward(x.value, w.value, g, stride, pad, groups)
        return (dx, dw) + ((db,) if b is not None else ())

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, back)


def avg_pool(x: Var, target_hw) -> Var:
    h, w = x.shape[-2:]
    fh, fw = h // target_hw[0], w // target_hw[1]
    out = nnops.avg_pool_to(x.value, target_hw)
    return _make(out, (x,), lambda g: (nnops.upsample_from(g, (h, w)) / (fh * fw),))


def upsample(x: Var, target_hw) -> Var:
    h, w = x.shape[-2:]
    out = nnops.upsample_from(x.value, target_hw)
    fh, fw = target_hw[0] // h, target_hw[1] // w
    return _make(out, (x,), lambda g: (nnops.avg_pool_to(g, (h, w)) * (fh * fw),))


# ---------------------------------------------------------------- neuron


def nilif(y: Var, theta: Var | None, d_cap: int, fixed_beta: float | None = None, relaxed: bool = False) -> Var:
    """NI-LIF over axis 0 of ``y``; returns spikes valued ``counts / d_cap``.

    ``theta`` holds one decay logit per timestep (index ``t`` drives the decay
    into step ``t``; entry 0 never matters since the state starts at zero).
    """
    T = y.shape[0]
    if fixed_beta is not None:
        betas = np.full(T, float(fixed_beta))
    else:
        th = theta.value
        if th.size < T and th.size != 1:
            raise ValueError(f"neuron has {th.size} decay parameters but input has {T} timesteps")
        betas = np_sigmoid(th[:T] if th.size > 1 else np.repeat(th, T))
    yv = y.value
    counts = np.empty_like(yv)
    h = np.empty_like(yv)
    u = np.empty_like(yv)
    prev = np.zeros(yv.shape[1:])
    for t in range(T):
        u[t] = betas[t] * prev + yv[t]
        counts[t] = fire(u[t], d_cap, relaxed)
        h[t] = u[t] - counts[t]
        prev = h[t]

    def back(g):
        gy = np.empty_like(yv)
        gbeta = np.zeros(T)
        gh = np.zeros(yv.shape[1:])
        for t in reversed(range(T)):
            ds = straight_through_grad(u[t], d_cap)
            gu = g[t] * ds + gh * (1.0 - d_cap * ds)
            gy[t] = gu
            if t > 0:
                gbeta[t] = np.sum(gu * h[t - 1])
            gh = gu * betas[t]
        if theta is None or fixed_beta is not None:
            return (gy,)
        gth = gbeta * betas * (1.0 - betas)
        if theta.value.size == 1:
            gth = np.array([gth.sum()])
        else:
            gth = np.concatenate([gth, np.zeros(theta.value.size - T)])
        return gy, gth

    parents = (y,) if theta is None or fixed_beta is not None else (y, theta)
    out = _make(counts / d_cap, parents, back)
    out.counts = counts
    out.d_cap = d_cap
    return out


def concat(vs, axis: int = 0) -> Var:
    vs = [_wrap(v) for v in vs]
    sizes = np.cumsum([v.shape[axis] for v in vs])[:-1]
    return _make(np.concatenate([v.value for v in vs], axis=axis), tuple(vs), lambda g: tuple(np.split(g, sizes, axis=axis)))


def index(a: Var, idx) -> Var:
    def back(g):
        out = np.zeros_like(a.value)
        out[idx] = g
        return (out,)

    return _make(a.value[idx], (a,), back)
