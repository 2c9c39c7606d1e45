"""
Spaces describe how a batch of examples is laid out in memory.

A :class:`VectorSpace` batch is an ``[n, dim]`` matrix. A
:class:`Conv2DSpace` batch is a rank-4 tensor whose axis order is given by
``axes``, a permutation of ``('b', 'c', 0, 1)`` (batch, channel, row,
column).

Flattening an image batch into vectors always uses channel-major, then row,
then column order, regardless of the source axis order. Conversions between
spaces are pure reshapes and transposes, so round trips are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Node

__all__ = ["Space", "VectorSpace", "Conv2DSpace", "Batch", "SpaceError",
           "format_as", "parse_axes"]

CANONICAL_AXES = ("b", "c", 0, 1)


class SpaceError(ValueError):
    pass


def parse_axes(axes) -> tuple:
    """Accept ``"b01c"``, ``('b', 0, 1, 'c')`` or ``['b', '0', '1', 'c']``."""
    if isinstance(axes, str):
        axes = list(axes)
    out = []
    for a in axes:
        if a in (0, 1, "0", "1"):
            out.append(int(a))
        elif a in ("b", "c"):
            out.append(a)
        else:
            raise SpaceError(f"unknown axis label {a!r}")
    if sorted(map(str, out)) != ["0", "1", "b", "c"]:
        raise SpaceError(f"axes must be a permutation of b, c, 0, 1; got "
                         f"{axes!r}")
    return tuple(out)


class Space:
    """Base class for batch layouts."""

    def num_elements(self) -> int:
        raise NotImplementedError

    def batch_shape(self, n) -> tuple:
        """Shape of a batch of ``n`` examples (``n`` may be ``None``)."""
        raise NotImplementedError

    def validate(self, tensor) -> None:
        shape = np.shape(tensor) if not isinstance(tensor, Node) else \
            tensor.shape
        expected = self.batch_shape(None)
        ok = len(shape) == len(expected) and all(
            e is None or e == s for e, s in zip(expected, shape))
        if not ok:
            raise SpaceError(
                f"{self} expects batches shaped "
                f"{_fmt(expected)}, got {_fmt(shape)}")

    def batch_axis(self) -> int:
        return 0

    # conversion helpers overridden per space -------------------------------

    def _to_canonical(self, x):
        """Numeric batch -> ``[n, num_elements]`` design matrix."""
        raise NotImplementedError

    def _from_canonical(self, x):
        raise NotImplementedError

    def _to_canonical_node(self, x: Node) -> Node:
        raise NotImplementedError

    def _from_canonical_node(self, x: Node) -> Node:
        raise NotImplementedError

    def np_format_as(self, x, target: "Space") -> np.ndarray:
        """Convert a numeric batch in this space into ``target``."""
        self.validate(x)
        if self == target:
            return x
        self._check_compatible(target)
        if isinstance(self, Conv2DSpace) and isinstance(target, Conv2DSpace) \
                and (self.rows, self.cols, self.num_channels) == (
                    target.rows, target.cols, target.num_channels):
            return np.transpose(x, [self.axes.index(a) for a in target.axes])
        return target._from_canonical(self._to_canonical(x))

    def format_node(self, x: Node, target: "Space") -> Node:
        """Symbolic counterpart of :meth:`np_format_as`."""
        self.validate(x)
        if self == target:
            return x
        self._check_compatible(target)
        if isinstance(self, Conv2DSpace) and isinstance(target, Conv2DSpace) \
                and (self.rows, self.cols, self.num_channels) == (
                    target.rows, target.cols, target.num_channels):
            perm = tuple(self.axes.index(a) for a in target.axes)
            return x.graph.apply("transpose", x, perm=perm)
        return target._from_canonical_node(self._to_canonical_node(x))

    def _check_compatible(self, target):
        if self.num_elements() != target.num_elements():
            raise SpaceError(
                f"cannot format {self} ({self.num_elements()} elements) as "
                f"{target} ({target.num_elements()} elements)")


@dataclass(frozen=True)
class VectorSpace(Space):
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise SpaceError(f"VectorSpace dim must be >= 1, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

    def __str__(self):
        return f"VectorSpace({self.dim})"

    def num_elements(self):
        return self.dim

    def batch_shape(self, n):
        return (n, self.dim)

    def _to_canonical(self, x):
        return x

    def _from_canonical(self, x):
        return x

    def _to_canonical_node(self, x):
        return x

    def _from_canonical_node(self, x):
        return x

    def to_dict(self):
        return {"kind": "vector", "dim": self.dim}


@dataclass(frozen=True)
class Conv2DSpace(Space):
    rows: int
    cols: int
    num_channels: int
    axes: tuple = ("b", 0, 1, "c")

    def __post_init__(self):
        for name in ("rows", "cols", "num_channels"):
            value = int(getattr(self, name))
            if value < 1:
                raise SpaceError(f"Conv2DSpace {name} must be >= 1")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "axes", parse_axes(self.axes))

    def __str__(self):
        axes = "".join(str(a) for a in self.axes)
        return (f"Conv2DSpace({self.rows}x{self.cols}x{self.num_channels}, "
                f"{axes})")

    def num_elements(self):
        return self.rows * self.cols * self.num_channels

    def batch_axis(self):
        return self.axes.index("b")

    def batch_shape(self, n):
        extent = {"b": n, "c": self.num_channels, 0: self.rows, 1: self.cols}
        return tuple(extent[a] for a in self.axes)

    def _perm_to(self, target_axes):
        return [self.axes.index(a) for a in target_axes]

    def _to_canonical(self, x):
        x = np.transpose(x, self._perm_to(CANONICAL_AXES))
        return x.reshape(x.shape[0], self.num_elements())

    def _from_canonical(self, x):
        x = x.reshape(x.shape[0], self.num_channels, self.rows, self.cols)
        return np.transpose(x, [CANONICAL_AXES.index(a) for a in self.axes])

    def _to_canonical_node(self, x):
        g = x.graph
        perm = tuple(self._perm_to(CANONICAL_AXES))
        if perm != (0, 1, 2, 3):
            x = g.apply("transpose", x, perm=perm)
        return g.apply("reshape", x, shape=(None, self.num_elements()))

    def _from_canonical_node(self, x):
        g = x.graph
        x = g.apply("reshape", x, shape=(None, self.num_channels, self.rows,
                                         self.cols))
        perm = tuple(CANONICAL_AXES.index(a) for a in self.axes)
        if perm != (0, 1, 2, 3):
            x = g.apply("transpose", x, perm=perm)
        return x

    def to_dict(self):
        return {"kind": "conv2d", "rows": self.rows, "cols": self.cols,
                "num_channels": self.num_channels,
                "axes": "".join(str(a) for a in self.axes)}


def space_from_dict(d: dict) -> Space:
    if d["kind"] == "vector":
        return VectorSpace(d["dim"])
    if d["kind"] == "conv2d":
        return Conv2DSpace(d["rows"], d["cols"], d["num_channels"], d["axes"])
    raise SpaceError(f"unknown space kind {d['kind']!r}")


@dataclass(frozen=True)
class Batch:
    """A numeric batch together with the space it is formatted for."""

    tensor: np.ndarray
    space: Space

    def __post_init__(self):
        self.space.validate(self.tensor)

    @property
    def size(self) -> int:
        return self.tensor.shape[self.space.batch_axis()]


def format_as(batch: Batch, target: Space) -> Batch:
    return Batch(batch.space.np_format_as(batch.tensor, target), target)


def _fmt(shape):
    return "[" + ", ".join("*" if s is None else str(s) for s in shape) + "]"
