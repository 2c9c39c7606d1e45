"""
Symbolic expression graphs with numeric interpretation and reverse-mode
differentiation.

Models build expressions out of :class:`Node` objects; training algorithms
differentiate them with :meth:`Graph.grad` and execute them with
:meth:`Graph.eval`. Every value is a float64 ``numpy.ndarray``.

Shapes are tuples whose entries are either non-negative ints or ``None``.
``None`` marks the batch axis, whose extent is only known once data is bound.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Graph",
    "Node",
    "GraphError",
    "EvaluationError",
    "OPS",
    "build",
    "variable",
    "evaluate",
    "grad",
    "conv2d_forward",
    "conv2d_backward_input",
    "conv2d_backward_kernels",
    "conv2d_output_shape",
]

Shape = tuple


class GraphError(ValueError):
    """Raised when a node cannot be constructed (bad shapes, bad op)."""


class EvaluationError(ValueError):
    """Raised when bound values cannot be evaluated through a graph."""


# ---------------------------------------------------------------------------
# Nodes
# ---------------------------------------------------------------------------


@dataclass(eq=False, frozen=True)
class Node:
    """A node in an expression graph. Acts as the graph's node reference."""

    graph: "Graph" = field(repr=False)
    id: int
    op: str
    parents: tuple
    shape: tuple
    name: str | None = None
    attrs: dict = field(default_factory=dict, repr=False)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def _lift(self, other):
        if isinstance(other, Node):
            return other
        return self.graph.constant(other)

    def __add__(self, other):
        return self.graph.apply("add", self, self._lift(other))

    def __radd__(self, other):
        return self.graph.apply("add", self._lift(other), self)

    def __sub__(self, other):
        return self.graph.apply("sub", self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.apply("sub", self._lift(other), self)

    def __mul__(self, other):
        return self.graph.apply("mul", self, self._lift(other))

    def __rmul__(self, other):
        return self.graph.apply("mul", self._lift(other), self)

    def __truediv__(self, other):
        return self.graph.apply("div", self, self._lift(other))

    def __rtruediv__(self, other):
        return self.graph.apply("div", self._lift(other), self)

    def __neg__(self):
        return self.graph.apply("negate", self)

    def __matmul__(self, other):
        return self.graph.apply("matmul", self, other)

    @property
    def T(self):
        return self.graph.apply("transpose", self, perm=(1, 0))


# ---------------------------------------------------------------------------
# Shape helpers
# ---------------------------------------------------------------------------


def _fmt(shape) -> str:
    return "[" + ", ".join("*" if s is None else str(s) for s in shape) + "]"


def _merge_dim(a, b, op):
    if a is None:
        return b
    if b is None or a == b:
        return a
    raise GraphError(f"{op}: incompatible extents {a} and {b}")


def _merge_shapes(op, *shapes):
    first = shapes[0]
    for s in shapes[1:]:
        if len(s) != len(first):
            raise GraphError(
                f"{op}: shape mismatch {' vs '.join(_fmt(x) for x in shapes)}")
        try:
            first = tuple(_merge_dim(a, b, op) for a, b in zip(first, s))
        except GraphError:
            raise GraphError(
                f"{op}: shape mismatch {' vs '.join(_fmt(x) for x in shapes)}"
            ) from None
    return first


def _norm_axis(axis, ndim, op):
    if axis is None:
        return None
    if not -ndim <= axis < ndim:
        raise GraphError(f"{op}: axis {axis} out of range for rank {ndim}")
    return axis % ndim


def conv2d_output_shape(rows, cols, krows, kcols, stride=1, pad=0):
    """Spatial output extent of a zero-padded, strided valid correlation."""
    sr, sc = _pair(stride)
    pr, pc = _pair(pad)
    if rows is None or cols is None:
        return None, None
    if krows > rows + 2 * pr or kcols > cols + 2 * pc:
        raise GraphError(
            f"conv2d: kernel {krows}x{kcols} larger than padded input "
            f"{rows + 2 * pr}x{cols + 2 * pc}")
    return (rows + 2 * pr - krows) // sr + 1, (cols + 2 * pc - kcols) // sc + 1


def _pair(v):
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


# ---------------------------------------------------------------------------
# Numeric kernels shared by several ops
# ---------------------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(x):
    z = x - x.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _windows(xp, krows, kcols, stride, out_r, out_c):
    sr, sc = stride
    for i in range(krows):
        for j in range(kcols):
            yield i, j, (slice(None), slice(None),
                         slice(i, i + sr * (out_r - 1) + 1, sr),
                         slice(j, j + sc * (out_c - 1) + 1, sc))


def conv2d_forward(x, kernels, stride=1, pad=0):
    """Cross-correlate a bc01 batch with ``[out, in, kr, kc]`` kernels.

    The input is zero padded by ``pad`` on every spatial border, and the
    kernel visits positions ``stride`` apart.
    """
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    if x.ndim != 4 or kernels.ndim != 4:
        raise GraphError("conv2d: input and kernels must both be rank 4")
    if x.shape[1] != kernels.shape[1]:
        raise GraphError(
            f"conv2d: input has {x.shape[1]} channels, kernels expect "
            f"{kernels.shape[1]}")
    stride, pad = _pair(stride), _pair(pad)
    if min(stride) < 1:
        raise GraphError("conv2d: stride must be >= 1")
    out_r, out_c = conv2d_output_shape(x.shape[2], x.shape[3],
                                       kernels.shape[2], kernels.shape[3],
                                       stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    out = np.zeros((x.shape[0], kernels.shape[0], out_r, out_c))
    for i, j, sl in _windows(xp, kernels.shape[2], kernels.shape[3],
                             stride, out_r, out_c):
        out += np.einsum("bchw,oc->bohw", xp[sl], kernels[:, :, i, j])
    return out


def conv2d_backward_input(g, kernels, input_shape, stride=1, pad=0):
    """Adjoint of :func:`conv2d_forward` with respect to its input."""
    stride, pad = _pair(stride), _pair(pad)
    b, c, r, cl = input_shape
    xp = np.zeros((b, c, r + 2 * pad[0], cl + 2 * pad[1]))
    out_r, out_c = g.shape[2], g.shape[3]
    for i, j, sl in _windows(xp, kernels.shape[2], kernels.shape[3],
                             stride, out_r, out_c):
        xp[sl] += np.einsum("bohw,oc->bchw", g, kernels[:, :, i, j])
    return xp[:, :, pad[0]:pad[0] + r, pad[1]:pad[1] + cl]


def conv2d_backward_kernels(x, g, kernel_shape, stride=1, pad=0):
    """Gradient of ``<conv2d_forward(x, k), g>`` with respect to ``k``."""
    stride, pad = _pair(stride), _pair(pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    dk = np.zeros(kernel_shape)
    out_r, out_c = g.shape[2], g.shape[3]
    for i, j, sl in _windows(xp, kernel_shape[2], kernel_shape[3],
                             stride, out_r, out_c):
        dk[:, :, i, j] = np.einsum("bohw,bchw->oc", g, xp[sl])
    return dk


def _pool_windows(x, pool, stride):
    pr, pc = pool
    out_r = (x.shape[2] - pr) // stride[0] + 1
    out_c = (x.shape[3] - pc) // stride[1] + 1
    return [x[sl] for _, _, sl in _windows(x, pr, pc, stride, out_r, out_c)]


def _max_pool(x, pool, stride):
    return np.max(np.stack(_pool_windows(x, pool, stride)), axis=0)


def _max_pool_grad(x, g, pool, stride):
    stacked = np.stack(_pool_windows(x, pool, stride))
    winner = np.argmax(stacked, axis=0)  # first maximal offset wins ties
    dx = np.zeros_like(x)
    out_r, out_c = g.shape[2], g.shape[3]
    for p, (_, _, sl) in enumerate(_windows(x, pool[0], pool[1], stride,
                                            out_r, out_c)):
        dx[sl] += np.where(winner == p, g, 0.0)
    return dx


# ---------------------------------------------------------------------------
# Op definitions
# ---------------------------------------------------------------------------


@dataclass
class OpDef:
    """Shape rule, numeric kernel and gradient rule of one op kind.

    ``vjp(node, g)`` receives the node and the node holding the gradient of
    the cost with respect to its output, and returns one gradient node (or
    ``None`` for no contribution) per parent.
    """

    infer: Callable
    compute: Callable
    vjp: Callable | None = None
    arity: int | None = None


OPS: dict[str, OpDef] = {}


def _register(name, infer, compute, vjp=None, arity=None):
    OPS[name] = OpDef(infer, compute, vjp, arity)


def _parents(node):
    nodes = node.graph.nodes
    return [nodes[p] for p in node.parents]


def _apply(node, op, *parents, **attrs):
    return node.graph.apply(op, *parents, **attrs)


# elementwise binary ---------------------------------------------------------


def _binary_infer(op):
    def infer(shapes, attrs):
        a, b = shapes
        if a == ():
            return b
        if b == ():
            return a
        return _merge_shapes(op, a, b)
    return infer


def _reduce_to(node, g, parent):
    """Sum a broadcast gradient back onto a scalar operand."""
    if parent.shape == () and node.shape != ():
        return _apply(node, "sum", g, axis=None)
    return g


def _add_vjp(node, g):
    a, b = _parents(node)
    return [_reduce_to(node, g, a), _reduce_to(node, g, b)]


def _sub_vjp(node, g):
    a, b = _parents(node)
    return [_reduce_to(node, g, a), _reduce_to(node, -g, b)]


def _mul_vjp(node, g):
    a, b = _parents(node)
    return [_reduce_to(node, g * b, a), _reduce_to(node, g * a, b)]


def _div_vjp(node, g):
    a, b = _parents(node)
    ga = g / b
    gb = -(g * node) / b
    return [_reduce_to(node, ga, a), _reduce_to(node, gb, b)]


_register("add", _binary_infer("add"), lambda v, at: v[0] + v[1], _add_vjp, 2)
_register("sub", _binary_infer("sub"), lambda v, at: v[0] - v[1], _sub_vjp, 2)
_register("mul", _binary_infer("mul"), lambda v, at: v[0] * v[1], _mul_vjp, 2)
_register("div", _binary_infer("div"), lambda v, at: v[0] / v[1], _div_vjp, 2)
_register("dropout", _binary_infer("dropout"), lambda v, at: v[0] * v[1],
          _mul_vjp, 2)


def _compare_infer(shapes, attrs):
    return _binary_infer("compare")(shapes, attrs)


_register("equal", _compare_infer,
          lambda v, at: (v[0] == v[1]).astype(np.float64), None, 2)
_register("not_equal", _compare_infer,
          lambda v, at: (v[0] != v[1]).astype(np.float64), None, 2)

# elementwise unary ------------------------------------------------------------


def _same(shapes, attrs):
    return shapes[0]


_register("negate", _same, lambda v, at: -v[0], lambda n, g: [-g], 1)
_register("exp", _same, lambda v, at: np.exp(v[0]), lambda n, g: [g * n], 1)
_register("log", _same, lambda v, at: np.log(v[0]),
          lambda n, g: [g / _parents(n)[0]], 1)
_register("sqrt", _same, lambda v, at: np.sqrt(v[0]),
          lambda n, g: [g / (n * 2.0)], 1)
_register("square", _same, lambda v, at: v[0] * v[0],
          lambda n, g: [g * _parents(n)[0] * 2.0], 1)
_register("sigmoid", _same, lambda v, at: _sigmoid(v[0]),
          lambda n, g: [g * n * (1.0 - n)], 1)
_register("tanh", _same, lambda v, at: np.tanh(v[0]),
          lambda n, g: [g * (1.0 - _apply(n, "square", n))], 1)
_register("relu", _same, lambda v, at: np.maximum(v[0], 0.0),
          lambda n, g: [g * _apply(n, "step", _parents(n)[0])], 1)
_register("softplus", _same, lambda v, at: np.logaddexp(0.0, v[0]),
          lambda n, g: [g * _apply(n, "sigmoid", _parents(n)[0])], 1)
# Heaviside with step(0) == 0, so relu'(0) == 0.
_register("step", _same, lambda v, at: (v[0] > 0).astype(np.float64), None, 1)
_register("zeros_like", _same, lambda v, at: np.zeros_like(v[0]), None, 1)


# row-wise ------------------------------------------------------------------


def _rows_infer(op):
    def infer(shapes, attrs):
        if len(shapes[0]) != 2:
            raise GraphError(f"{op}: expects a rank-2 [n, K] input, got "
                             f"{_fmt(shapes[0])}")
        return shapes[0]
    return infer


def _softmax_vjp(node, g):
    inner = _apply(node, "sum", g * node, axis=1)
    return [node * (g - _apply(node, "broadcast", inner, node, axis=1))]


def _log_softmax_vjp(node, g):
    (x,) = _parents(node)
    sm = _apply(node, "softmax", x)
    total = _apply(node, "sum", g, axis=1)
    return [g - sm * _apply(node, "broadcast", total, node, axis=1)]


_register("softmax", _rows_infer("softmax"), lambda v, at: _softmax(v[0]),
          _softmax_vjp, 1)
_register("log_softmax", _rows_infer("log_softmax"),
          lambda v, at: _log_softmax(v[0]), _log_softmax_vjp, 1)


def _argmax_infer(shapes, attrs):
    s = shapes[0]
    axis = _norm_axis(attrs.get("axis", 1), len(s), "argmax")
    attrs["axis"] = axis
    return s[:axis] + s[axis + 1:]


# np.argmax returns the lowest index among ties.
_register("argmax", _argmax_infer,
          lambda v, at: np.argmax(v[0], axis=at["axis"]).astype(np.float64),
          None, 1)


# matmul ----------------------------------------------------------------------


def _matmul_infer(shapes, attrs):
    a, b = shapes
    if len(a) != 2 or len(b) != 2:
        raise GraphError(f"matmul: expects rank-2 operands, got {_fmt(a)} "
                         f"and {_fmt(b)}")
    try:
        _merge_dim(a[1], b[0], "matmul")
    except GraphError:
        raise GraphError(f"matmul: inner extents differ, {_fmt(a)} @ "
                         f"{_fmt(b)}") from None
    return (a[0], b[1])


def _matmul_vjp(node, g):
    a, b = _parents(node)
    return [g @ b.T, a.T @ g]


_register("matmul", _matmul_infer, lambda v, at: v[0] @ v[1], _matmul_vjp, 2)


# reductions ------------------------------------------------------------------


def _reduce_infer(op):
    def infer(shapes, attrs):
        s = shapes[0]
        axis = _norm_axis(attrs.get("axis"), len(s), op)
        attrs["axis"] = axis
        if axis is None:
            return ()
        return s[:axis] + s[axis + 1:]
    return infer


def _sum_vjp(node, g):
    (x,) = _parents(node)
    return [_apply(node, "broadcast", g, x, axis=node.attrs["axis"])]


def _mean_vjp(node, g):
    (x,) = _parents(node)
    count = _apply(node, "size", x, axis=node.attrs["axis"])
    return [_apply(node, "broadcast", g / count, x, axis=node.attrs["axis"])]


_register("sum", _reduce_infer("sum"),
          lambda v, at: np.asarray(np.sum(v[0], axis=at["axis"])),
          _sum_vjp, 1)
_register("mean", _reduce_infer("mean"),
          lambda v, at: np.asarray(np.mean(v[0], axis=at["axis"])),
          _mean_vjp, 1)


def _size_infer(shapes, attrs):
    _norm_axis(attrs.get("axis"), len(shapes[0]), "size")
    return ()


def _size_compute(v, at):
    axis = at.get("axis")
    if axis is None:
        return np.asarray(float(v[0].size))
    return np.asarray(float(v[0].shape[axis]))


_register("size", _size_infer, _size_compute, None, 1)


def _broadcast_infer(shapes, attrs):
    v, like = shapes
    axis = _norm_axis(attrs.get("axis"), len(like), "broadcast")
    attrs["axis"] = axis
    expected = () if axis is None else like[:axis] + like[axis + 1:]
    if len(v) != len(expected):
        raise GraphError(f"broadcast: cannot broadcast {_fmt(v)} along axis "
                         f"{axis} of {_fmt(like)}")
    try:
        _merge_shapes("broadcast", v, expected)
    except GraphError:
        raise GraphError(f"broadcast: cannot broadcast {_fmt(v)} along axis "
                         f"{axis} of {_fmt(like)}") from None
    return like


def _broadcast_compute(v, at):
    val, like = v
    axis = at["axis"]
    if axis is not None:
        val = np.expand_dims(val, axis)
    return np.broadcast_to(val, like.shape).copy()


def _broadcast_vjp(node, g):
    return [_apply(node, "sum", g, axis=node.attrs["axis"]), None]


_register("broadcast", _broadcast_infer, _broadcast_compute, _broadcast_vjp, 2)


# structural ------------------------------------------------------------------


def _reshape_infer(shapes, attrs):
    src = shapes[0]
    target = tuple(attrs["shape"])
    if target.count(None) > 1:
        raise GraphError("reshape: at most one batch (None) axis allowed")
    if None in target:
        if target[0] is not None or not src or (
                src[0] is not None and None in src[1:]):
            raise GraphError("reshape: the batch axis must lead both shapes")
        known_src = np.prod([s for s in src[1:]], dtype=np.int64)
        known_dst = np.prod(target[1:], dtype=np.int64)
        if None in src[1:] or known_src != known_dst:
            raise GraphError(f"reshape: cannot reshape {_fmt(src)} into "
                             f"{_fmt(target)}")
        return (src[0],) + target[1:]
    if None not in src and np.prod(src, dtype=np.int64) != np.prod(
            target, dtype=np.int64):
        raise GraphError(f"reshape: cannot reshape {_fmt(src)} into "
                         f"{_fmt(target)}")
    return target


def _reshape_compute(v, at):
    target = tuple(v[0].shape[0] if s is None else s for s in at["shape"])
    return v[0].reshape(target)


def _reshape_vjp(node, g):
    (x,) = _parents(node)
    return [_apply(node, "reshape_like", g, x)]


_register("reshape", _reshape_infer, _reshape_compute, _reshape_vjp, 1)


def _reshape_like_infer(shapes, attrs):
    return shapes[1]


def _reshape_like_vjp(node, g):
    (x, _) = _parents(node)
    return [_apply(node, "reshape_like", g, x), None]


_register("reshape_like", _reshape_like_infer,
          lambda v, at: v[0].reshape(v[1].shape), _reshape_like_vjp, 2)


def _transpose_infer(shapes, attrs):
    s = shapes[0]
    perm = tuple(attrs["perm"])
    if sorted(perm) != list(range(len(s))):
        raise GraphError(f"transpose: {perm} is not a permutation of the "
                         f"axes of {_fmt(s)}")
    attrs["perm"] = perm
    return tuple(s[p] for p in perm)


def _transpose_vjp(node, g):
    inverse = tuple(np.argsort(node.attrs["perm"]).tolist())
    return [_apply(node, "transpose", g, perm=inverse)]


_register("transpose", _transpose_infer,
          lambda v, at: np.transpose(v[0], at["perm"]), _transpose_vjp, 1)


def _concat_infer(shapes, attrs):
    ndim = len(shapes[0])
    axis = _norm_axis(attrs.get("axis", 0), ndim, "concat")
    attrs["axis"] = axis
    rest = [s[:axis] + s[axis + 1:] for s in shapes]
    if any(len(s) != ndim for s in shapes):
        raise GraphError("concat: operands differ in rank")
    _merge_shapes("concat", *rest)
    extents = [s[axis] for s in shapes]
    out = None if None in extents else int(np.sum(extents))
    merged = _merge_shapes("concat", *rest)
    return merged[:axis] + (out,) + merged[axis:]


def _concat_vjp(node, g):
    axis = node.attrs["axis"]
    grads = []
    start = 0
    for p in _parents(node):
        if p.shape[axis] is None:
            raise GraphError("concat: cannot differentiate along a batch axis")
        stop = start + p.shape[axis]
        grads.append(_apply(node, "slice", g, axis=axis, start=start,
                            stop=stop))
        start = stop
    return grads


_register("concat", _concat_infer,
          lambda v, at: np.concatenate(v, axis=at["axis"]), _concat_vjp)


def _slice_infer(shapes, attrs):
    s = shapes[0]
    axis = _norm_axis(attrs["axis"], len(s), "slice")
    attrs["axis"] = axis
    start, stop = attrs["start"], attrs["stop"]
    if s[axis] is not None and not 0 <= start <= stop <= s[axis]:
        raise GraphError(f"slice: [{start}:{stop}] out of range for axis "
                         f"{axis} of {_fmt(s)}")
    return s[:axis] + (stop - start,) + s[axis + 1:]


def _slice_compute(v, at):
    index = [slice(None)] * v[0].ndim
    index[at["axis"]] = slice(at["start"], at["stop"])
    return v[0][tuple(index)]


def _slice_vjp(node, g):
    (x,) = _parents(node)
    return [_apply(node, "pad_slice", g, x, axis=node.attrs["axis"],
                   start=node.attrs["start"], stop=node.attrs["stop"])]


_register("slice", _slice_infer, _slice_compute, _slice_vjp, 1)


def _pad_slice_compute(v, at):
    g, like = v
    out = np.zeros_like(like)
    index = [slice(None)] * out.ndim
    index[at["axis"]] = slice(at["start"], at["stop"])
    out[tuple(index)] = g
    return out


_register("pad_slice", lambda shapes, at: shapes[1], _pad_slice_compute,
          None, 2)


# convolution and pooling -------------------------------------------------------


def _conv_infer(shapes, attrs):
    x, k = shapes
    if len(x) != 4 or len(k) != 4:
        raise GraphError(f"conv2d: expects bc01 input and [o, c, kr, kc] "
                         f"kernels, got {_fmt(x)} and {_fmt(k)}")
    if None in k:
        raise GraphError("conv2d: kernel shape must be fully known")
    if None in x[1:]:
        raise GraphError("conv2d: only the batch axis may be unknown")
    stride, pad = _pair(attrs.get("stride", 1)), _pair(attrs.get("pad", 0))
    if min(stride) < 1 or min(pad) < 0:
        raise GraphError("conv2d: stride must be >= 1 and pad >= 0")
    attrs["stride"], attrs["pad"] = stride, pad
    if x[1] != k[1]:
        raise GraphError(f"conv2d: input {_fmt(x)} has {x[1]} channels but "
                         f"kernels {_fmt(k)} expect {k[1]}")
    r, c = conv2d_output_shape(x[2], x[3], k[2], k[3], stride, pad)
    return (x[0], k[0], r, c)


def _conv_vjp(node, g):
    x, k = _parents(node)
    at = node.attrs
    return [
        _apply(node, "conv2d_grad_input", g, k, x, stride=at["stride"],
               pad=at["pad"]),
        _apply(node, "conv2d_grad_kernels", x, g, k, stride=at["stride"],
               pad=at["pad"]),
    ]


_register("conv2d", _conv_infer,
          lambda v, at: conv2d_forward(v[0], v[1], at["stride"], at["pad"]),
          _conv_vjp, 2)
_register("conv2d_grad_input", lambda shapes, at: shapes[2],
          lambda v, at: conv2d_backward_input(v[0], v[1], v[2].shape,
                                              at["stride"], at["pad"]),
          None, 3)
_register("conv2d_grad_kernels", lambda shapes, at: shapes[2],
          lambda v, at: conv2d_backward_kernels(v[0], v[1], v[2].shape,
                                                at["stride"], at["pad"]),
          None, 3)


def _conv_t_infer(shapes, attrs):
    y, k = shapes
    if len(y) != 4 or len(k) != 4 or None in k:
        raise GraphError(f"conv2d_transpose: expects bc01 input and known "
                         f"kernels, got {_fmt(y)} and {_fmt(k)}")
    stride, pad = _pair(attrs.get("stride", 1)), _pair(attrs.get("pad", 0))
    attrs["stride"], attrs["pad"] = stride, pad
    rows, cols = int(attrs["rows"]), int(attrs["cols"])
    expected = conv2d_output_shape(rows, cols, k[2], k[3], stride, pad)
    if y[1] != k[0] or tuple(y[2:]) != expected:
        raise GraphError(f"conv2d_transpose: {_fmt(y)} is not the output of "
                         f"kernels {_fmt(k)} on a {rows}x{cols} image")
    return (y[0], k[1], rows, cols)


def _conv_t_compute(v, at):
    y, k = v
    shape = (y.shape[0], k.shape[1], at["rows"], at["cols"])
    return conv2d_backward_input(y, k, shape, at["stride"], at["pad"])


def _conv_t_vjp(node, g):
    y, k = _parents(node)
    at = node.attrs
    return [
        _apply(node, "conv2d", g, k, stride=at["stride"], pad=at["pad"]),
        _apply(node, "conv2d_grad_kernels", g, y, k, stride=at["stride"],
               pad=at["pad"]),
    ]


_register("conv2d_transpose", _conv_t_infer, _conv_t_compute, _conv_t_vjp, 2)


def _pool_infer(shapes, attrs):
    x = shapes[0]
    if len(x) != 4 or None in x[1:]:
        raise GraphError(f"max_pool_2d: expects a bc01 input, got {_fmt(x)}")
    pool = _pair(attrs["pool"])
    stride = _pair(attrs.get("stride") or pool)
    attrs["pool"], attrs["stride"] = pool, stride
    if pool[0] > x[2] or pool[1] > x[3]:
        raise GraphError(f"max_pool_2d: pool {pool} larger than input "
                         f"{_fmt(x)}")
    return (x[0], x[1], (x[2] - pool[0]) // stride[0] + 1,
            (x[3] - pool[1]) // stride[1] + 1)


def _pool_vjp(node, g):
    (x,) = _parents(node)
    return [_apply(node, "max_pool_grad", x, g, pool=node.attrs["pool"],
                   stride=node.attrs["stride"])]


_register("max_pool_2d", _pool_infer,
          lambda v, at: _max_pool(v[0], at["pool"], at["stride"]),
          _pool_vjp, 1)
_register("max_pool_grad", lambda shapes, at: shapes[0],
          lambda v, at: _max_pool_grad(v[0], v[1], at["pool"], at["stride"]),
          None, 2)


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


class Graph:
    """
    Append-only directed acyclic graph of expression nodes.

    Node ``i`` only ever refers to parents with smaller ids, so the node list
    is always in topological order. Existing nodes are never modified;
    :meth:`grad` only appends.

    Construction is not synchronized. :meth:`eval` is reentrant and may be
    called concurrently with distinct bindings.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._names: dict[str, Node] = {}
        self._plans: dict[tuple, tuple] = {}
        self._plan_lock = threading.Lock()

    def __len__(self):
        return len(self.nodes)

    # construction ---------------------------------------------------------

    def _append(self, op, parents, shape, name=None, attrs=None) -> Node:
        node = Node(self, len(self.nodes), op, tuple(p.id for p in parents),
                    tuple(shape), name, attrs or {})
        self.nodes.append(node)
        return node

    def variable(self, name: str, shape: Sequence) -> Node:
        """Declare an input leaf. ``None`` in ``shape`` marks the batch axis."""
        if name in self._names:
            raise GraphError(f"variable: duplicate name {name!r}")
        shape = tuple(None if s is None or s == "*" else int(s) for s in shape)
        if shape.count(None) > 1:
            raise GraphError("variable: at most one batch (None) axis allowed")
        if any(s is not None and s < 0 for s in shape):
            raise GraphError(f"variable: negative extent in {_fmt(shape)}")
        node = self._append("variable", (), shape, name)
        self._names[name] = node
        return node

    def param(self, name: str, shape: Sequence) -> Node:
        """Return the variable called ``name``, declaring it if needed."""
        node = self._names.get(name)
        if node is None:
            return self.variable(name, shape)
        if node.shape != tuple(shape):
            raise GraphError(f"param: {name!r} already declared with shape "
                             f"{_fmt(node.shape)}, requested {_fmt(shape)}")
        return node

    def get(self, name: str) -> Node | None:
        return self._names.get(name)

    def constant(self, value, name: str | None = None) -> Node:
        value = np.array(value, dtype=np.float64)
        value.setflags(write=False)
        return self._append("constant", (), value.shape, name,
                            {"value": value})

    def apply(self, op: str, *parents: Node, name: str | None = None,
              **attrs) -> Node:
        """Append a node computing ``op`` of ``parents`` (``build``)."""
        if op in ("variable", "constant"):
            raise GraphError(f"use Graph.{op}() to create {op} nodes")
        try:
            opdef = OPS[op]
        except KeyError:
            raise GraphError(f"unknown op kind {op!r}") from None
        for p in parents:
            if not isinstance(p, Node) or p.graph is not self:
                raise GraphError(f"{op}: parent {p!r} does not belong to "
                                 f"this graph")
        if opdef.arity is not None and len(parents) != opdef.arity:
            raise GraphError(f"{op}: expects {opdef.arity} parents, got "
                             f"{len(parents)}")
        if not parents:
            raise GraphError(f"{op}: needs at least one parent")
        attrs = dict(attrs)
        shape = opdef.infer([p.shape for p in parents], attrs)
        return self._append(op, parents, shape, name, attrs)

    # evaluation -----------------------------------------------------------

    def _plan(self, outputs: tuple) -> tuple:
        plan = self._plans.get(outputs)
        if plan is not None:
            return plan
        needed = set()
        stack = list(outputs)
        while stack:
            i = stack.pop()
            if i in needed:
                continue
            needed.add(i)
            stack.extend(self.nodes[i].parents)
        plan = tuple(sorted(needed))
        with self._plan_lock:
            self._plans[outputs] = plan
        return plan

    def eval(self, outputs: Iterable[Node] | Node,
             bindings: Mapping | None = None) -> list[np.ndarray]:
        """Evaluate ``outputs`` given values for the variables they reach.

        ``bindings`` maps variable nodes (or their names) to arrays.
        """
        single = isinstance(outputs, Node)
        outs = [outputs] if single else list(outputs)
        for o in outs:
            if o.graph is not self:
                raise EvaluationError("output node belongs to another graph")
        values: dict[int, np.ndarray] = {}
        for key, value in (bindings or {}).items():
            node = self._names.get(key) if isinstance(key, str) else key
            if node is None:
                continue
            if node.graph is not self or node.op != "variable":
                raise EvaluationError(f"binding target {key!r} is not a "
                                      f"variable of this graph")
            arr = np.asarray(value, dtype=np.float64)
            if not _shape_matches(node.shape, arr.shape):
                raise EvaluationError(
                    f"variable {node.name!r} declared {_fmt(node.shape)} but "
                    f"bound to {_fmt(arr.shape)}")
            values[node.id] = arr
        for i in self._plan(tuple(o.id for o in outs)):
            node = self.nodes[i]
            if node.op == "variable":
                if i not in values:
                    raise EvaluationError(f"unbound variable {node.name!r}")
                continue
            if node.op == "constant":
                values[i] = node.attrs["value"]
                continue
            args = [values[p] for p in node.parents]
            try:
                out = OPS[node.op].compute(args, node.attrs)
            except GraphError:
                raise
            except (ValueError, IndexError) as exc:
                raise EvaluationError(f"{node.op} (node {i}): {exc}") from exc
            out = np.asarray(out, dtype=np.float64)
            if not _shape_matches(node.shape, out.shape):
                raise EvaluationError(
                    f"{node.op} (node {i}): produced {_fmt(out.shape)}, "
                    f"expected {_fmt(node.shape)}")
            values[i] = out
        result = [values[o.id] for o in outs]
        return result[0] if single else result

    # differentiation ------------------------------------------------------

    def grad(self, cost: Node, wrt: Sequence[Node]) -> list[Node]:
        """Symbolic gradient of scalar ``cost`` with respect to variables.

        Returns new nodes shaped like each entry of ``wrt``. Variables the
        cost does not depend on get a zero node.
        """
        if cost.shape not in ((), (1,)):
            raise GraphError(f"grad: target must be scalar, got shape "
                             f"{_fmt(cost.shape)}")
        wrt = list(wrt)
        for w in wrt:
            if w.graph is not self or w.op != "variable":
                raise GraphError(f"grad: {w!r} is not a variable of this graph")
        ancestors = self._plan((cost.id,))
        wanted = {w.id for w in wrt}
        # nodes lying on some path from a wrt variable to the cost
        live = set()
        for i in ancestors:
            node = self.nodes[i]
            if i in wanted or any(p in live for p in node.parents):
                live.add(i)
        pending: dict[int, list[Node]] = {
            cost.id: [self.constant(np.ones(cost.shape))]}
        for i in reversed(ancestors):
            if i not in live or i not in pending:
                continue
            node = self.nodes[i]
            contributions = pending.pop(i)
            g = contributions[0]
            for c in contributions[1:]:
                g = self.apply("add", g, c)
            if node.op == "variable":
                pending[i] = [g]
                continue
            opdef = OPS[node.op]
            if opdef.vjp is None:
                continue
            for pid, pg in zip(node.parents, opdef.vjp(node, g)):
                if pg is not None and pid in live:
                    pending.setdefault(pid, []).append(pg)
        out = []
        for w in wrt:
            if w.id in pending:
                out.append(pending[w.id][0])
            else:
                out.append(self.apply("zeros_like", w))
        return out


def _shape_matches(declared, actual) -> bool:
    if len(declared) != len(actual):
        return False
    return all(d is None or d == a for d, a in zip(declared, actual))


# ---------------------------------------------------------------------------
# Functional spellings
# ---------------------------------------------------------------------------


def variable(graph: Graph, name: str, shape) -> Node:
    return graph.variable(name, shape)


def build(graph: Graph, op: str, *parents: Node, **attrs) -> Node:
    return graph.apply(op, *parents, **attrs)


def evaluate(graph: Graph, outputs, bindings=None):
    return graph.eval(outputs, bindings)


def grad(graph: Graph, scalar: Node, wrt) -> list[Node]:
    return graph.grad(scalar, wrt)


def _unary(op):
    def fn(x: Node) -> Node:
        return x.graph.apply(op, x)
    fn.__name__ = op
    return fn


exp = _unary("exp")
log = _unary("log")
sqrt = _unary("sqrt")
square = _unary("square")
sigmoid = _unary("sigmoid")
tanh = _unary("tanh")
relu = _unary("relu")
softplus = _unary("softplus")
step = _unary("step")
softmax = _unary("softmax")
log_softmax = _unary("log_softmax")


def sum(x: Node, axis=None) -> Node:  # noqa: A001
    return x.graph.apply("sum", x, axis=axis)


def mean(x: Node, axis=None) -> Node:
    return x.graph.apply("mean", x, axis=axis)


def broadcast_row(v: Node, like: Node) -> Node:
    """Repeat a ``[k]`` vector down the rows of a ``[n, k]`` node."""
    return v.graph.apply("broadcast", v, like, axis=0)


def dropout(x: Node, mask: Node) -> Node:
    """Multiply ``x`` by an externally sampled mask."""
    return x.graph.apply("dropout", x, mask)


def argmax(x: Node, axis=1) -> Node:
    return x.graph.apply("argmax", x, axis=axis)
