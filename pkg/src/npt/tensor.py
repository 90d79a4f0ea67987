"""Rank-3 tensor arithmetic with reverse-mode automatic differentiation.

Activations are dense [batch, channels, vertices] arrays. Every operation
here builds the value eagerly with numpy and, when an input is tracked on a
DiffGraph, appends a node holding the backward rule. backward() then runs a
single reverse sweep over the tape.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class Tensor3:
    """Dense [N, C, V] activation tensor, optionally tracked on a DiffGraph."""

    __slots__ = ("data", "graph", "grad_id")

    def __init__(self, data, graph=None, grad_id=None):
        arr = np.asarray(data)
        if arr.ndim != 3:
            raise ShapeMismatch(f"Tensor3 requires rank-3 data, got shape {arr.shape}")
        self.data = arr
        self.graph = graph
        self.grad_id = grad_id

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def v(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        tracked = "" if self.graph is None else f", node={self.grad_id}"
        return f"Tensor3(shape={self.data.shape}{tracked})"


class Param:
    """Learnable leaf value (weight matrix or bias vector) with a stable name."""

    __slots__ = ("name", "data", "graph", "grad_id")

    def __init__(self, name: str, data):
        self.name = name
        self.data = np.asarray(data)
        self.graph = None
        self.grad_id = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.data.shape})"


class _Node:
    __slots__ = ("tag", "parents", "backward")

    def __init__(self, tag, parents, backward):
        self.tag = tag
        self.parents = parents
        self.backward = backward


class GradMap:
    """Gradients keyed by tape node; untouched values read back as zeros."""

    def __init__(self, grads):
        self._grads = grads

    def of(self, value) -> np.ndarray:
        if value.grad_id is not None and self._grads.get(value.grad_id) is not None:
            return self._grads[value.grad_id]
        return np.zeros_like(value.data)


class DiffGraph:
    """Append-only tape of operations; parents always precede children."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self):
        return len(self._nodes)

    def track(self, value):
        """Register a leaf (input or parameter) so gradients reach it."""
        value.graph = self
        value.grad_id = self._emit("leaf", (), None)
        return value

    def _emit(self, tag: str, parents, backward: Optional[Callable]) -> int:
        self._nodes.append(_Node(tag, parents, backward))
        return len(self._nodes) - 1

    def backward(self, root: Tensor3) -> GradMap:
        """Reverse sweep from a scalar [1,1,1] root; returns all gradients."""
        if root.graph is not self or root.grad_id is None:
            raise ValueError("backward root is not tracked on this graph")
        if root.shape != (1, 1, 1):
            raise ShapeMismatch(f"backward requires a [1,1,1] scalar root, got {root.shape}")
        grads: dict[int, np.ndarray] = {root.grad_id: np.ones_like(root.data)}
        owned: set[int] = set()  # entries safe to mutate in place; others may alias
        for nid in range(root.grad_id, -1, -1):
            g = grads.get(nid)
            if g is None:
                continue
            node = self._nodes[nid]
            if node.backward is None:
                continue
            for pid, contrib in zip(node.parents, node.backward(g)):
                if pid is None or contrib is None:
                    continue
                if pid not in grads:
                    grads[pid] = contrib
                elif pid in owned:
                    grads[pid] += contrib
                else:
                    grads[pid] = grads[pid] + contrib
                    owned.add(pid)
        return GradMap(grads)


def tensor3(data, dtype=np.float64) -> Tensor3:
    """Build an untracked Tensor3, coercing dtype."""
    return Tensor3(np.asarray(data, dtype=dtype))


def _joint_graph(*values) -> Optional[DiffGraph]:
    graph = None
    for val in values:
        if val.graph is None:
            continue
        if graph is None:
            graph = val.graph
        elif graph is not val.graph:
            raise ValueError("operands are tracked on different graphs")
    return graph


def _pid(value, graph):
    return value.grad_id if value.graph is graph else None


def _wire(out: Tensor3, graph, tag, inputs, backward):
    if graph is None:
        return out
    parents = tuple(_pid(val, graph) for val in inputs)
    out.graph = graph
    out.grad_id = graph._emit(tag, parents, backward)
    return out


def pointwise_linear(x: Tensor3, weight: Param, bias: Param) -> Tensor3:
    """Per-vertex linear map: out[n,o,v] = sum_c W[o,c] x[n,c,v] + b[o].

    This is a 1x1 convolution along the vertex axis; it is the only op that
    mixes channels, and it treats every vertex identically.
    """
    w, b = weight.data, bias.data
    if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"weight {w.shape} and bias {b.shape} do not form a layer")
    if w.shape[1] != x.c:
        raise ShapeMismatch(f"weight expects {w.shape[1]} channels, input has {x.c} (shape {x.shape})")
    out = Tensor3(np.matmul(w, x.data) + b[None, :, None])
    graph = _joint_graph(x, weight, bias)
    if graph is None:
        return out
    x_data = x.data

    def backward(g):
        gx = np.matmul(w.T, g) if _pid(x, graph) is not None else None
        gw = (np.matmul(g, x_data.transpose(0, 2, 1)).sum(axis=0)
              if _pid(weight, graph) is not None else None)
        gb = g.sum(axis=(0, 2)) if _pid(bias, graph) is not None else None
        return gx, gw, gb

    return _wire(out, graph, "pointwise_linear", (x, weight, bias), backward)


def instance_norm(x: Tensor3, eps: float = 1e-5) -> Tensor3:
    """Normalize each (n, c) slice across vertices to zero mean, unit variance.

    Population variance (divisor V); sigma = sqrt(var + eps). No learnable
    affine: scale and shift live in the conditioning layers built on top.
    """
    if eps <= 0:
        raise ValueError(f"instance_norm eps must be positive, got {eps}")
    mu = x.data.mean(axis=2, keepdims=True)
    centered = x.data - mu
    var = np.einsum("ncv,ncv->nc", centered, centered) / x.v
    sigma = np.sqrt(var + eps)[:, :, None].astype(centered.dtype, copy=False)
    centered /= sigma
    y = centered
    out = Tensor3(y)
    graph = _joint_graph(x)
    if graph is None:
        return out
    inv_v = 1.0 / x.v

    def backward(g):
        g_mean = g.mean(axis=2, keepdims=True)
        gy_mean = (np.einsum("ncv,ncv->nc", g, y) * inv_v)[:, :, None]
        gx = g - g_mean
        gx -= y * gy_mean
        gx /= sigma
        return (gx,)

    return _wire(out, graph, "instance_norm", (x,), backward)


def relu(x: Tensor3) -> Tensor3:
    out = Tensor3(np.maximum(x.data, 0.0))
    graph = _joint_graph(x)
    if graph is None:
        return out
    mask = x.data > 0  # subgradient 0 at exactly 0

    def backward(g):
        return (g * mask,)

    return _wire(out, graph, "relu", (x,), backward)


def tanh_act(x: Tensor3) -> Tensor3:
    y = np.tanh(x.data)
    out = Tensor3(y)
    graph = _joint_graph(x)
    if graph is None:
        return out

    def backward(g):
        return (g * (1.0 - y * y),)

    return _wire(out, graph, "tanh", (x,), backward)


def _require_same_shape(a: Tensor3, b: Tensor3, op: str):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op} requires equal shapes, got {a.shape} and {b.shape}")


def add(a: Tensor3, b: Tensor3) -> Tensor3:
    _require_same_shape(a, b, "add")
    out = Tensor3(a.data + b.data)
    graph = _joint_graph(a, b)
    if graph is None:
        return out

    def backward(g):
        return g, g

    return _wire(out, graph, "add", (a, b), backward)


def sub(a: Tensor3, b: Tensor3) -> Tensor3:
    _require_same_shape(a, b, "sub")
    out = Tensor3(a.data - b.data)
    graph = _joint_graph(a, b)
    if graph is None:
        return out

    def backward(g):
        return g, -g

    return _wire(out, graph, "sub", (a, b), backward)


def mul(a: Tensor3, b: Tensor3) -> Tensor3:
    _require_same_shape(a, b, "mul")
    out = Tensor3(a.data * b.data)
    graph = _joint_graph(a, b)
    if graph is None:
        return out
    a_data, b_data = a.data, b.data

    def backward(g):
        return g * b_data, g * a_data

    return _wire(out, graph, "mul", (a, b), backward)


def scale(x: Tensor3, factor: float) -> Tensor3:
    out = Tensor3(x.data * factor)
    graph = _joint_graph(x)
    if graph is None:
        return out

    def backward(g):
        return (g * factor,)

    return _wire(out, graph, "scale", (x,), backward)


def concat_channels(a: Tensor3, b: Tensor3) -> Tensor3:
    if a.n != b.n or a.v != b.v:
        raise ShapeMismatch(f"concat_channels requires matching N and V, got {a.shape} and {b.shape}")
    out = Tensor3(np.concatenate([a.data, b.data], axis=1))
    graph = _joint_graph(a, b)
    if graph is None:
        return out
    split = a.c

    def backward(g):
        return g[:, :split, :], g[:, split:, :]

    return _wire(out, graph, "concat_channels", (a, b), backward)


def global_max_pool(x: Tensor3) -> Tensor3:
    """Max over vertices; gradient routes to the first argmax per (n, c)."""
    idx = np.argmax(x.data, axis=2)  # first occurrence wins ties
    out = Tensor3(np.take_along_axis(x.data, idx[:, :, None], axis=2))
    graph = _joint_graph(x)
    if graph is None:
        return out
    x_shape = x.shape

    def backward(g):
        gx = np.zeros(x_shape, dtype=g.dtype)
        np.put_along_axis(gx, idx[:, :, None], g, axis=2)
        return (gx,)

    return _wire(out, graph, "global_max_pool", (x,), backward)


def broadcast_vertices(x: Tensor3, v: int) -> Tensor3:
    """Tile a [N, C, 1] tensor across v vertices; backward sums over V."""
    if x.v != 1:
        raise ShapeMismatch(f"broadcast_vertices expects V=1 input, got {x.shape}")
    out = Tensor3(np.repeat(x.data, v, axis=2))
    graph = _joint_graph(x)
    if graph is None:
        return out

    def backward(g):
        return (g.sum(axis=2, keepdims=True),)

    return _wire(out, graph, "broadcast_vertices", (x,), backward)


def gather_vertices(x: Tensor3, idx) -> Tensor3:
    """Select vertex columns: out[n,c,k] = x[n,c,idx[...,k]].

    idx is one shared [K] index vector or a per-sample [N, K] array.
    Backward scatter-adds, so repeated indices accumulate.
    """
    idx = np.asarray(idx)
    if idx.ndim == 1:
        idx = np.broadcast_to(idx, (x.n, idx.shape[0]))
    if idx.ndim != 2 or idx.shape[0] != x.n:
        raise ShapeMismatch(f"gather index shape {idx.shape} does not match batch {x.n}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.v):
        raise IndexError(f"gather index out of range for V={x.v}")
    take = np.take_along_axis(x.data, idx[:, None, :].repeat(x.c, axis=1), axis=2)
    out = Tensor3(take)
    graph = _joint_graph(x)
    if graph is None:
        return out
    n, c, v = x.shape
    # flat destination index per gathered element, shared across channels
    flat_idx = ((np.arange(n)[:, None, None] * c + np.arange(c)[None, :, None]) * v
                + idx[:, None, :]).ravel()

    def backward(g):
        gx = np.bincount(flat_idx, weights=g.ravel().astype(np.float64),
                         minlength=n * c * v)
        return (gx.reshape(n, c, v).astype(g.dtype),)

    return _wire(out, graph, "gather_vertices", (x,), backward)


def sum_all(x: Tensor3) -> Tensor3:
    """Reduce every element to a [1,1,1] scalar (channel axis first)."""
    total = x.data.sum(axis=1).sum()
    out = Tensor3(np.asarray(total, dtype=x.data.dtype).reshape(1, 1, 1))
    graph = _joint_graph(x)
    if graph is None:
        return out
    x_shape, dtype = x.shape, x.data.dtype

    def backward(g):
        return (np.full(x_shape, g.reshape(()), dtype=dtype),)

    return _wire(out, graph, "sum_all", (x,), backward)


def finite_diff_check(f: Callable, inputs: Sequence, step: float = 1e-6,
                      max_coords_per_input: Optional[int] = None, seed: int = 0) -> float:
    """Compare analytic gradients of a scalar program against central differences.

    f receives the input values (Tensor3 or Param) and returns a scalar
    Tensor3. Analytic gradients come from one tracked forward/backward pass;
    numeric ones from untracked re-evaluations at x +/- step. Returns the max
    over checked coordinates of |a - n| / max(1, |a|, |n|). With
    max_coords_per_input set, a seeded subset of coordinates is checked per
    input instead of all of them.
    """
    if step <= 0:
        raise ValueError("finite_diff_check step must be positive")
    graph = DiffGraph()
    for val in inputs:
        graph.track(val)
    root = f(*inputs)
    if root.shape != (1, 1, 1):
        raise ShapeMismatch(f"finite_diff_check needs a scalar-valued program, got {root.shape}")
    grads = graph.backward(root)
    analytic_by_input = [grads.of(val).reshape(-1) for val in inputs]
    for val in inputs:
        val.graph = None
        val.grad_id = None

    rng = np.random.default_rng(seed)
    worst = 0.0
    for val, analytic in zip(inputs, analytic_by_input):
        flat = val.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_input is not None and flat.size > max_coords_per_input:
            coords = np.sort(rng.choice(flat.size, size=max_coords_per_input, replace=False))
        for k in coords:
            orig = flat[k]
            flat[k] = orig + step
            f_plus = f(*inputs).item()
            flat[k] = orig - step
            f_minus = f(*inputs).item()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[k])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    return worst
