"""Minimal dense tensors with reverse-mode gradients.

Covers exactly the operations the operator model's forward pass needs:
pointwise channel mixing (1x1 convolution semantics), per-mode channel
mixing, constant-matrix application along the last axis, a smooth
Gaussian-gated activation, and the relative-L2 loss.  Every operation
records a backward closure; backward() walks the recorded graph in reverse
topological order.  NaN or Inf anywhere raises NumericalFault immediately.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import (
    GradientMissing,
    NoTape,
    NumericalFault,
    ShapeMismatch,
    ZeroTarget,
)

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "grad_populated", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.grad_populated = False
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        if self.requires_grad:
            self.grad[...] = 0.0
            self.grad_populated = False

    def __add__(self, other):
        return add(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents, backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericalFault("operation produced NaN or Inf")
    out = Tensor(data)
    out._parents = tuple(parents)
    out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g
    t.grad_populated = True


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient g down to the given (broadcast-source) shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    """Elementwise multiply with broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), backward)


def linear(x: Tensor, W: Tensor, bias: Tensor) -> Tensor:
    """Pointwise-in-space channel mixing: [b, c_in, *sp] -> [b, c_out, *sp]."""
    x, W, bias = _as_tensor(x), _as_tensor(W), _as_tensor(bias)
    if x.data.ndim < 2 or W.data.ndim != 2 or x.data.shape[1] != W.data.shape[1]:
        raise ShapeMismatch(
            f"linear: input channels {x.data.shape} vs weight {W.data.shape}")
    if bias.data.shape != (W.data.shape[0],):
        raise ShapeMismatch(f"linear: bias {bias.data.shape} vs weight {W.data.shape}")
    b_, cin = x.data.shape[0], x.data.shape[1]
    spatial = x.data.shape[2:]
    x2 = x.data.reshape(b_, cin, -1)
    y = np.einsum("oc,bcs->bos", W.data, x2)
    y += bias.data[None, :, None]
    cout = W.data.shape[0]

    def backward(g):
        g2 = g.reshape(b_, cout, -1)
        _accumulate(x, np.einsum("oc,bos->bcs", W.data, g2).reshape(x.data.shape))
        _accumulate(W, np.einsum("bos,bcs->oc", g2, x2))
        _accumulate(bias, g2.sum(axis=(0, 2)))

    return _node(y.reshape((b_, cout) + spatial), (x, W, bias), backward)


def mode_mix(s: Tensor, W: Tensor) -> Tensor:
    """Per-mode channel mixing: s[b, w, m], W[m, o, w] -> [b, o, m]."""
    s, W = _as_tensor(s), _as_tensor(W)
    if s.data.ndim != 3 or W.data.ndim != 3:
        raise ShapeMismatch("mode_mix expects 3-d operands")
    if s.data.shape[2] != W.data.shape[0] or s.data.shape[1] != W.data.shape[2]:
        raise ShapeMismatch(f"mode_mix: {s.data.shape} against {W.data.shape}")
    y = np.einsum("mow,bwm->bom", W.data, s.data)

    def backward(g):
        _accumulate(s, np.einsum("mow,bom->bwm", W.data, g))
        _accumulate(W, np.einsum("bom,bwm->mow", g, s.data))

    return _node(y, (s, W), backward)


def apply_matrix(x: Tensor, M: np.ndarray) -> Tensor:
    """Multiply by a constant matrix along the last axis: [..., n] @ [n, k]."""
    x = _as_tensor(x)
    M = np.asarray(M, dtype=np.float64)
    if x.data.shape[-1] != M.shape[0]:
        raise ShapeMismatch(f"apply_matrix: {x.data.shape} against {M.shape}")
    y = x.data @ M

    def backward(g):
        _accumulate(x, g @ M.T)

    return _node(y, (x,), backward)


def scale_last(x: Tensor, v: np.ndarray) -> Tensor:
    """Multiply by a constant vector broadcast on the last axis."""
    x = _as_tensor(x)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (x.data.shape[-1],):
        raise ShapeMismatch(f"scale_last: {x.data.shape} against {v.shape}")

    def backward(g):
        _accumulate(x, g * v)

    return _node(x.data * v, (x,), backward)


def activation(x: Tensor) -> Tensor:
    """Gaussian-gated unit x * Phi(x) with exact normal CDF; smooth everywhere."""
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    y = x.data * cdf

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        _accumulate(x, g * (cdf + x.data * pdf))

    return _node(y, (x,), backward)


def tsum(x: Tensor) -> Tensor:
    x = _as_tensor(x)

    def backward(g):
        _accumulate(x, np.broadcast_to(g, x.data.shape).copy())

    return _node(np.sum(x.data), (x,), backward)


def rel_l2_loss(pred: Tensor, truth) -> Tensor:
    """Mean over the batch of ||pred - truth||_2 / ||truth||_2."""
    pred = _as_tensor(pred)
    t = truth.data if isinstance(truth, Tensor) else np.asarray(truth, dtype=np.float64)
    if pred.data.shape != t.shape:
        raise ShapeMismatch(f"loss shapes {pred.data.shape} vs {t.shape}")
    b = pred.data.shape[0]
    diff = (pred.data - t).reshape(b, -1)
    tnorm = np.linalg.norm(t.reshape(b, -1), axis=1)
    if np.any(tnorm == 0.0):
        raise ZeroTarget("zero-norm target item in batch")
    rnorm = np.linalg.norm(diff, axis=1)
    loss = np.mean(rnorm / tnorm)

    def backward(g):
        # subgradient 0 where the residual vanishes
        denom = np.where(rnorm > 0.0, rnorm, 1.0) * tnorm * b
        gp = diff / denom[:, None]
        gp[rnorm == 0.0] = 0.0
        _accumulate(pred, g * gp.reshape(pred.data.shape))

    return _node(loss, (pred,), backward)


def backward(loss: Tensor):
    """Populate gradients of every reachable parameter from a scalar loss."""
    if loss.data.ndim != 0:
        raise ValueError("backward expects a scalar loss")
    if not loss._parents:
        raise NoTape("no forward graph recorded for this value")
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
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


class ParamStore:
    """Named parameter tensors with paired gradient slots, insertion-ordered."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def num_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        if set(state) != set(self._params):
            raise ShapeMismatch(f"parameter names differ: {sorted(set(state) ^ set(self._params))}")
        for k, v in state.items():
            if v.shape != self._params[k].data.shape:
                raise ShapeMismatch(f"parameter {k!r}: {v.shape} vs {self._params[k].data.shape}")
            self._params[k].data[...] = v


@dataclass
class AdamState:
    """Adam moments per parameter plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamStore, state: AdamState):
    """Bias-corrected Adam update; gradients are zeroed afterward."""
    for name, p in params.items():
        if not p.grad_populated:
            raise GradientMissing(f"parameter {name!r} has no populated gradient")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(p.data)):
            raise NumericalFault(f"parameter {name!r} became non-finite")
    params.zero_grad()
