"""Model interface."""

from __future__ import annotations

import numpy as np

from ..graph import Graph, Node

__all__ = ["Model", "CapabilityError", "supports"]


class CapabilityError(NotImplementedError):
    """The model does not implement an optional learning interface."""


class Model:
    """
    An object that stores parameters and builds expressions from them.

    Parameters live as float64 arrays keyed by name. When a model builds an
    expression it declares one graph variable per parameter under the same
    name, so :meth:`bindings` is all an algorithm needs to evaluate it.

    Subclasses may also implement ``train_batch`` / ``train_all`` to carry
    their own learning rule.
    """

    kind = "model"
    input_space = None
    output_space = None

    def __init__(self, nonnegative=()):
        self.nonnegative = tuple(nonnegative)

    def get_params(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def set_params(self, values: dict) -> None:
        current = self.get_params()
        for name, value in values.items():
            value = np.asarray(value, dtype=np.float64)
            if name not in current:
                raise KeyError(f"{type(self).__name__} has no parameter "
                               f"{name!r}")
            if value.shape != current[name].shape:
                raise ValueError(f"parameter {name!r} has shape "
                                 f"{current[name].shape}, got {value.shape}")
            self._set_param(name, value)

    def _set_param(self, name: str, value: np.ndarray) -> None:
        raise NotImplementedError

    def param_nodes(self, graph: Graph) -> dict[str, Node]:
        return {name: graph.param(name, value.shape)
                for name, value in self.get_params().items()}

    def bindings(self) -> dict[str, np.ndarray]:
        return dict(self.get_params())

    def get_weight_names(self) -> list[str]:
        """Names of the weight matrices that weight decay acts on."""
        return []

    def get_monitoring_channels(self, data: dict) -> dict[str, Node]:
        return {}

    def censor_updates(self, updates: dict) -> dict:
        """Project proposed parameter values back into the allowed region.

        The base class clamps every parameter named in ``nonnegative`` at 0.
        """
        out = dict(updates)
        for name in self.nonnegative:
            if name in out:
                out[name] = np.maximum(out[name], 0.0)
        return out

    def train_batch(self, X, y=None) -> None:
        raise CapabilityError(f"{type(self).__name__} has no default "
                              f"minibatch learning rule")

    def train_all(self, dataset) -> None:
        raise CapabilityError(f"{type(self).__name__} cannot train itself")

    def get_config(self) -> dict:
        """JSON-serializable constructor arguments (without parameters)."""
        raise NotImplementedError

    @classmethod
    def from_config(cls, config: dict) -> "Model":
        return cls(**config)


def supports(model: Model, capability: str) -> bool:
    """True if ``model`` overrides the optional method ``capability``."""
    return getattr(type(model), capability) is not getattr(Model, capability)


def uniform_init(rng, shape, fan_in, irange=None):
    """Uniform weights in ``±irange``, defaulting to ``±1/sqrt(fan_in)``."""
    if irange is None:
        irange = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-irange, irange, size=shape)


def max_norm_project(W, max_norm, axis, tol=1e-13):
    """Rescale slices of ``W`` whose Euclidean norm exceeds ``max_norm``.

    Norms are taken over ``axis`` (the incoming weights of one unit).
    Slices within ``tol`` of the limit are left alone, which makes the
    projection exactly idempotent.
    """
    W = np.array(W, dtype=np.float64)
    for _ in range(4):
        norms = np.sqrt(np.sum(W * W, axis=axis, keepdims=True))
        over = norms > max_norm + tol
        if not over.any():
            break
        scale = np.where(over, max_norm / np.where(over, norms, 1.0), 1.0)
        W = W * scale
    return W
