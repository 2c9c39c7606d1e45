"""
Linear operators with a shared interface.

A :class:`LinearTransform` maps batches in ``input_space`` to batches in
``output_space`` (:meth:`lmul`) and back through its adjoint
(:meth:`lmul_T`). Both build graph nodes; the parameters appear in the graph
as variables named after the transform's parameter names, so a model binds
their current values by name at evaluation time.

Tiled convolution and locally connected operators would be further
subclasses; only the dense and standard 2-D convolution cases exist.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph, Node, conv2d_output_shape
from .spaces import Conv2DSpace, Space, VectorSpace

__all__ = ["LinearTransform", "DenseTransform", "Conv2DTransform"]


class LinearTransform:
    """Interface for linear operators between two spaces."""

    input_space: Space
    output_space: Space

    def get_params(self) -> dict:
        """Parameter arrays keyed by their graph variable names."""
        raise NotImplementedError

    def set_param(self, name: str, value) -> None:
        raise NotImplementedError

    def lmul(self, x: Node) -> Node:
        raise NotImplementedError

    def lmul_T(self, y: Node) -> Node:
        raise NotImplementedError

    def as_dense(self) -> np.ndarray:
        """The ``[in_elements, out_elements]`` matrix of this operator."""
        raise NotImplementedError

    def _param_node(self, graph: Graph, name: str) -> Node:
        return graph.param(name, self.get_params()[name].shape)

    def bindings(self) -> dict:
        return dict(self.get_params())

    def apply(self, x) -> np.ndarray:
        """Numeric ``lmul`` on a batch formatted for ``input_space``."""
        return self._numeric(self.lmul, self.input_space, x)

    def apply_T(self, y) -> np.ndarray:
        return self._numeric(self.lmul_T, self.output_space, y)

    def _numeric(self, fn, space, x):
        x = np.asarray(x, dtype=np.float64)
        space.validate(x)
        g = Graph()
        node = g.variable("__x", space.batch_shape(None))
        out = fn(node)
        bindings = {node: x}
        bindings.update(self.bindings())
        return g.eval(out, bindings)


class DenseTransform(LinearTransform):
    """Multiplication by a dense ``[in_dim, out_dim]`` matrix."""

    def __init__(self, W, name: str = "W"):
        W = np.array(W, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError(f"DenseTransform expects a matrix, got shape "
                             f"{W.shape}")
        self.W = W
        self.name = name
        self.input_space = VectorSpace(W.shape[0])
        self.output_space = VectorSpace(W.shape[1])

    def get_params(self):
        return {self.name: self.W}

    def set_param(self, name, value):
        assert name == self.name
        self.W = np.asarray(value, dtype=np.float64)

    def lmul(self, x):
        self.input_space.validate(x)
        return x @ self._param_node(x.graph, self.name)

    def lmul_T(self, y):
        self.output_space.validate(y)
        return y @ self._param_node(y.graph, self.name).T

    def as_dense(self):
        return self.W.copy()


class Conv2DTransform(LinearTransform):
    """
    Discrete 2-D cross-correlation with zero padding and stride.

    Parameters
    ----------
    kernels : array, shape [out_channels, in_channels, krows, kcols]
    input_space : Conv2DSpace
        Any axis order; batches are converted to bc01 for the computation.
    stride, pad : int or pair of int
    output_axes : axis order of ``output_space``
    """

    def __init__(self, kernels, input_space: Conv2DSpace, stride=1, pad=0,
                 name: str = "kernels", output_axes=("b", "c", 0, 1)):
        kernels = np.array(kernels, dtype=np.float64)
        if kernels.ndim != 4:
            raise ValueError("kernels must be rank 4 [out, in, kr, kc]")
        if kernels.shape[1] != input_space.num_channels:
            raise ValueError(
                f"kernels expect {kernels.shape[1]} input channels but "
                f"{input_space} has {input_space.num_channels}")
        self.kernels = kernels
        self.name = name
        self.stride = _pair(stride)
        self.pad = _pair(pad)
        if min(self.stride) < 1 or min(self.pad) < 0:
            raise ValueError("stride must be >= 1 and pad >= 0")
        self.input_space = input_space
        rows, cols = conv2d_output_shape(input_space.rows, input_space.cols,
                                         kernels.shape[2], kernels.shape[3],
                                         self.stride, self.pad)
        self.output_space = Conv2DSpace(rows, cols, kernels.shape[0],
                                        output_axes)
        self._bc01_in = Conv2DSpace(input_space.rows, input_space.cols,
                                    input_space.num_channels, "bc01")
        self._bc01_out = Conv2DSpace(rows, cols, kernels.shape[0], "bc01")

    def get_params(self):
        return {self.name: self.kernels}

    def set_param(self, name, value):
        assert name == self.name
        self.kernels = np.asarray(value, dtype=np.float64)

    def lmul(self, x):
        x = self.input_space.format_node(x, self._bc01_in)
        k = self._param_node(x.graph, self.name)
        out = x.graph.apply("conv2d", x, k, stride=self.stride, pad=self.pad)
        return self._bc01_out.format_node(out, self.output_space)

    def lmul_T(self, y):
        y = self.output_space.format_node(y, self._bc01_out)
        k = self._param_node(y.graph, self.name)
        out = y.graph.apply("conv2d_transpose", y, k,
                            rows=self.input_space.rows,
                            cols=self.input_space.cols,
                            stride=self.stride, pad=self.pad)
        return self._bc01_in.format_node(out, self.input_space)

    def as_dense(self):
        o, c, kr, kc = self.kernels.shape
        rows, cols = self.input_space.rows, self.input_space.cols
        orows, ocols = self.output_space.rows, self.output_space.cols
        M = np.zeros((c * rows * cols, o * orows * ocols))
        for oc in range(o):
            for r in range(orows):
                for s in range(ocols):
                    col = (oc * orows + r) * ocols + s
                    for ic in range(c):
                        for i in range(kr):
                            for j in range(kc):
                                pr = r * self.stride[0] + i - self.pad[0]
                                pc = s * self.stride[1] + j - self.pad[1]
                                if 0 <= pr < rows and 0 <= pc < cols:
                                    row = (ic * rows + pr) * cols + pc
                                    M[row, col] += self.kernels[oc, ic, i, j]
        return M


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)
