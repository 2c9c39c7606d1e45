"""
Multilayer perceptrons built from layers.

Each layer is a linear transform followed by a bias and an elementwise (or
row-wise, for softmax) nonlinearity. A layer's input space is set by the
layer before it, and it allocates its parameters at that point.
"""

from __future__ import annotations

import numpy as np

from .. import graph as G
from ..graph import Node
from ..linear import Conv2DTransform, DenseTransform
from ..rng import make_rng
from ..spaces import Conv2DSpace, Space, SpaceError, VectorSpace, space_from_dict
from .base import Model, max_norm_project, uniform_init

__all__ = ["Layer", "Linear", "Sigmoid", "Tanh", "RectifiedLinear", "Softmax",
           "ConvLayer", "MLP", "ACTIVATIONS"]

ACTIVATIONS = ("linear", "sigmoid", "tanh", "relu", "softmax")


def _activate(name, z):
    if name == "linear":
        return z
    if name == "relu":
        return G.relu(z)
    return z.graph.apply(name, z)


class Layer:
    """
    Dense layer: ``activation(x W + b)``.

    Parameters
    ----------
    dim : int
        Number of output units.
    layer_name : str, optional
        Prefix for parameter names; the MLP assigns ``h<i>`` if omitted.
    irange : float, optional
        Weights start uniform in ``±irange`` (default ``1/sqrt(fan_in)``).
    max_norm : float, optional
        Limit on the norm of each unit's incoming weight vector.
    init_W, init_b : array, optional
        Explicit initial values, overriding random initialization.
    """

    activation = "linear"

    def __init__(self, dim: int, layer_name: str | None = None,
                 irange: float | None = None, max_norm: float | None = None,
                 init_bias: float = 0.0, init_W=None, init_b=None):
        if int(dim) < 1:
            raise ValueError(f"layer dim must be >= 1, got {dim}")
        if max_norm is not None and max_norm <= 0:
            raise ValueError("max_norm must be positive")
        self.dim = int(dim)
        self.layer_name = layer_name
        self.irange = irange
        self.max_norm = max_norm
        self.init_bias = init_bias
        self.init_W = init_W
        self.init_b = init_b
        self.input_space = None
        self.output_space = VectorSpace(self.dim)
        self.transform = None
        self.b = None

    def __repr__(self):
        return f"{type(self).__name__}({self.layer_name}, dim={self.dim})"

    @property
    def W_name(self):
        return f"{self.layer_name}_W"

    @property
    def b_name(self):
        return f"{self.layer_name}_b"

    def set_input_space(self, space: Space, rng) -> None:
        self.input_space = space
        n_in = space.num_elements()
        if self.init_W is not None:
            W = np.array(self.init_W, dtype=np.float64)
            if W.shape != (n_in, self.dim):
                raise SpaceError(
                    f"{self.layer_name}: init_W has shape {W.shape}, layer "
                    f"needs {(n_in, self.dim)} for input {space}")
        else:
            W = uniform_init(rng, (n_in, self.dim), n_in, self.irange)
        self.transform = DenseTransform(W, name=self.W_name)
        self.b = self._initial_bias((self.dim,))

    def _initial_bias(self, shape):
        if self.init_b is not None:
            b = np.array(self.init_b, dtype=np.float64).reshape(shape)
            return b
        return np.full(shape, float(self.init_bias))

    def get_params(self):
        params = dict(self.transform.get_params())
        params[self.b_name] = self.b
        return params

    def set_param(self, name, value):
        if name == self.b_name:
            self.b = value
        else:
            self.transform.set_param(name, value)

    def weight_name(self):
        return self.W_name

    def preactivation(self, x: Node) -> Node:
        x = self.input_space.format_node(x, self.transform.input_space) \
            if self.input_space != self.transform.input_space else x
        z = self.transform.lmul(x)
        b = x.graph.param(self.b_name, self.b.shape)
        return z + G.broadcast_row(b, z)

    def fprop(self, x: Node) -> Node:
        return _activate(self.activation, self.preactivation(x))

    def censor(self, updates: dict) -> None:
        if self.max_norm is not None and self.W_name in updates:
            # columns of the [in, out] matrix are per-unit incoming weights
            updates[self.W_name] = max_norm_project(updates[self.W_name],
                                                    self.max_norm, axis=0)

    def get_config(self) -> dict:
        return {"kind": self.activation, "dim": self.dim,
                "layer_name": self.layer_name, "irange": self.irange,
                "max_norm": self.max_norm, "init_bias": self.init_bias}


class Linear(Layer):
    activation = "linear"


class Sigmoid(Layer):
    activation = "sigmoid"


class Tanh(Layer):
    activation = "tanh"


class RectifiedLinear(Layer):
    activation = "relu"


class Softmax(Layer):
    activation = "softmax"


class ConvLayer(Layer):
    """
    Convolutional layer with untied biases and optional max pooling.

    The output lives in a bc01 :class:`Conv2DSpace`. ``input_shape``
    (rows, cols, channels) lets the layer accept vector input, which is
    reshaped in the canonical channel-row-column order.
    """

    def __init__(self, output_channels: int, kernel_shape, stride=1, pad=0,
                 activation: str = "relu", pool_shape=None, pool_stride=None,
                 input_shape=None, layer_name: str | None = None,
                 irange: float | None = None, max_norm: float | None = None,
                 init_bias: float = 0.0, init_W=None, init_b=None):
        super().__init__(output_channels, layer_name, irange, max_norm,
                         init_bias, init_W, init_b)
        if activation not in ACTIVATIONS or activation == "softmax":
            raise ValueError(f"unsupported conv activation {activation!r}")
        self.activation = activation
        self.kernel_shape = tuple(int(k) for k in kernel_shape)
        self.stride = stride
        self.pad = pad
        self.pool_shape = None if pool_shape is None else tuple(pool_shape)
        self.pool_stride = pool_stride
        self.input_shape = None if input_shape is None else tuple(input_shape)
        self.output_space = None

    def set_input_space(self, space, rng):
        if isinstance(space, Conv2DSpace):
            conv_in = space
            if self.input_shape is not None and (
                    space.rows, space.cols, space.num_channels) != \
                    self.input_shape:
                raise SpaceError(f"{self.layer_name}: declared input shape "
                                 f"{self.input_shape} but receives {space}")
        else:
            if self.input_shape is None:
                raise SpaceError(
                    f"{self.layer_name}: convolution needs a Conv2DSpace "
                    f"input, got {space}; set input_shape to reshape it")
            conv_in = Conv2DSpace(*self.input_shape, axes="bc01")
            if conv_in.num_elements() != space.num_elements():
                raise SpaceError(
                    f"{self.layer_name}: layer space mismatch, {space} cannot "
                    f"be viewed as {conv_in}")
        self.input_space = space
        self._conv_space = conv_in
        c = conv_in.num_channels
        kshape = (self.dim, c) + self.kernel_shape
        if self.init_W is not None:
            K = np.array(self.init_W, dtype=np.float64).reshape(kshape)
        else:
            K = uniform_init(rng, kshape, c * int(np.prod(self.kernel_shape)),
                             self.irange)
        self.transform = Conv2DTransform(K, conv_in, self.stride, self.pad,
                                         name=self.W_name)
        out = self.transform.output_space
        self.b = self._initial_bias((out.num_channels, out.rows, out.cols))
        if self.pool_shape is not None:
            stride = tuple(self.pool_stride or self.pool_shape)
            rows = (out.rows - self.pool_shape[0]) // stride[0] + 1
            cols = (out.cols - self.pool_shape[1]) // stride[1] + 1
            self.output_space = Conv2DSpace(rows, cols, out.num_channels,
                                            "bc01")
        else:
            self.output_space = out

    def preactivation(self, x):
        if self.input_space != self._conv_space:
            x = self.input_space.format_node(x, self._conv_space)
        z = self.transform.lmul(x)
        b = x.graph.param(self.b_name, self.b.shape)
        return z + z.graph.apply("broadcast", b, z, axis=0)

    def fprop(self, x):
        out = _activate(self.activation, self.preactivation(x))
        if self.pool_shape is not None:
            out = out.graph.apply("max_pool_2d", out, pool=self.pool_shape,
                                  stride=self.pool_stride or self.pool_shape)
        return out

    def censor(self, updates):
        if self.max_norm is not None and self.W_name in updates:
            updates[self.W_name] = max_norm_project(
                updates[self.W_name], self.max_norm, axis=(1, 2, 3))

    def get_config(self):
        cfg = super().get_config()
        cfg.update(kind="conv2d", output_channels=cfg.pop("dim"),
                   activation=self.activation,
                   kernel_shape=list(self.kernel_shape),
                   stride=list(_pair(self.stride)), pad=list(_pair(self.pad)),
                   pool_shape=None if self.pool_shape is None
                   else list(self.pool_shape),
                   pool_stride=None if self.pool_stride is None
                   else list(_pair(self.pool_stride)),
                   input_shape=None if self.input_shape is None
                   else list(self.input_shape))
        return cfg


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


LAYER_KINDS = {"linear": Linear, "sigmoid": Sigmoid, "tanh": Tanh,
               "relu": RectifiedLinear, "softmax": Softmax,
               "conv2d": ConvLayer}


class MLP(Model):
    """
    A stack of layers applied in order.

    Parameters
    ----------
    layers : list of Layer
    nvis : int, optional
        Input dimension; shorthand for ``input_space=VectorSpace(nvis)``.
    input_space : Space, optional
    seed : int, optional
        Seeds weight initialization.
    nonnegative : list of str, optional
        Parameter names clamped at zero after every update.
    """

    kind = "mlp"

    def __init__(self, layers, nvis: int | None = None,
                 input_space: Space | None = None, seed: int | None = None,
                 nonnegative=()):
        super().__init__(nonnegative)
        if (nvis is None) == (input_space is None):
            raise ValueError("MLP needs exactly one of nvis or input_space")
        if not layers:
            raise ValueError("MLP needs at least one layer")
        self.input_space = VectorSpace(nvis) if input_space is None \
            else input_space
        self.layers = list(layers)
        self.seed = seed
        rng = make_rng(seed)
        space = self.input_space
        names = set()
        for i, layer in enumerate(self.layers):
            if layer.layer_name is None:
                layer.layer_name = f"h{i}"
            if layer.layer_name in names:
                raise ValueError(f"duplicate layer name {layer.layer_name!r}")
            names.add(layer.layer_name)
            layer.set_input_space(space, rng)
            space = layer.output_space
        self.output_space = space
        for name in self.nonnegative:
            if name not in self.get_params():
                raise ValueError(f"nonnegative names unknown parameter "
                                 f"{name!r}")

    def get_params(self):
        params = {}
        for layer in self.layers:
            params.update(layer.get_params())
        return params

    def _set_param(self, name, value):
        for layer in self.layers:
            if name in layer.get_params():
                layer.set_param(name, value)
                return
        raise KeyError(name)

    def get_weight_names(self):
        return [layer.weight_name() for layer in self.layers]

    def _format_input(self, x: Node) -> Node:
        expected = self.input_space.batch_shape(None)
        if len(x.shape) == len(expected) and all(
                e is None or e == s for e, s in zip(expected, x.shape)):
            return x
        return VectorSpace(self.input_space.num_elements()).format_node(
            x, self.input_space)

    def fprop(self, x: Node) -> Node:
        """Symbolic forward propagation of a batch through every layer."""
        x = self._format_input(x)
        for layer in self.layers:
            x = layer.fprop(x)
        return x

    def dropout_fprop(self, x: Node, masks: dict) -> Node:
        """Forward propagation with each layer's input multiplied by
        ``masks[layer_index]`` where present."""
        x = self._format_input(x)
        for i, layer in enumerate(self.layers):
            if masks.get(i) is not None:
                x = G.dropout(x, masks[i])
            x = layer.fprop(x)
        return x

    def layer_input_spaces(self):
        return [layer.input_space for layer in self.layers]

    def censor_updates(self, updates):
        out = dict(updates)
        for layer in self.layers:
            layer.censor(out)
        return super().censor_updates(out)

    def get_monitoring_channels(self, data):
        y = data.get("y")
        last = self.layers[-1]
        if y is None or last.activation not in ("sigmoid", "softmax"):
            return {}
        y_hat = self.fprop(data["X"])
        if y_hat.shape[-1] == 1:
            wrong = G.step(_abs_diff(y_hat, y) - 0.5)
        else:
            wrong = y_hat.graph.apply("not_equal", G.argmax(y_hat),
                                      G.argmax(y))
        return {"output_misclass": G.mean(wrong)}

    def get_config(self):
        return {"layers": [layer.get_config() for layer in self.layers],
                "input_space": self.input_space.to_dict(),
                "seed": self.seed, "nonnegative": list(self.nonnegative)}

    @classmethod
    def from_config(cls, config):
        layers = []
        for spec in config["layers"]:
            spec = dict(spec)
            kind = spec.pop("kind")
            layers.append(LAYER_KINDS[kind](**spec))
        return cls(layers, input_space=space_from_dict(config["input_space"]),
                   seed=config.get("seed"),
                   nonnegative=config.get("nonnegative", ()))


def _abs_diff(a, b):
    return G.sqrt(G.square(a - b))
