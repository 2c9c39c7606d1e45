"""
Cost functions, independent of the algorithm that minimizes them.

A cost may return ``None`` from :meth:`Cost.cost_value` when its value is
intractable, and :meth:`Cost.get_gradients` is allowed to return estimates.
Gradients come back as :class:`GradientSources`: a symbolic part that the
algorithm evaluates through the graph plus zero or more sampled parts that
are computed numerically from each batch. Algorithms add the two without
caring which kind a cost produced.

``data`` arguments are dicts of graph nodes with key ``"X"`` and, for
supervised costs, ``"y"``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from . import graph as G
from .graph import Graph, Node
from .models import MLP, RBM, DenoisingAutoencoder, Model
from .rng import make_rng

__all__ = ["Cost", "GradientSources", "NLLSoftmax", "GaussianMSE",
           "WeightDecay", "DropoutCost", "SumOfCosts", "CD", "PCD",
           "DAEReconstruction", "CostError"]


class CostError(ValueError):
    pass


@dataclass
class GradientSources:
    """Per-parameter gradient = evaluated ``symbolic[name]`` + the sum of
    every sampler's contribution for ``name``.

    Each sampler is ``(coefficient, fn)`` where ``fn(batch)`` returns a dict
    of arrays keyed by parameter name; ``batch`` is a dict with ``"X"`` and
    ``"y"`` arrays.
    """

    symbolic: dict = field(default_factory=dict)
    samplers: list = field(default_factory=list)

    def scaled(self, coeff: float) -> "GradientSources":
        symbolic = {name: node * coeff for name, node in self.symbolic.items()}
        samplers = [(c * coeff, fn) for c, fn in self.samplers]
        return GradientSources(symbolic, samplers)

    def evaluate(self, graph: Graph, bindings: dict, batch: dict,
                 names) -> dict:
        names = list(names)
        out = {name: None for name in names}
        sym_names = [n for n in names if n in self.symbolic]
        if sym_names:
            values = graph.eval([self.symbolic[n] for n in sym_names],
                                bindings)
            out.update(zip(sym_names, values))
        for coeff, fn in self.samplers:
            for name, value in fn(batch).items():
                term = coeff * value
                out[name] = term if out[name] is None else out[name] + term
        for name in names:
            if out[name] is None:
                out[name] = np.zeros_like(bindings[name])
        return out


def merge_gradients(terms) -> GradientSources:
    """Sum several :class:`GradientSources` (already scaled)."""
    symbolic: dict[str, Node] = {}
    samplers = []
    for t in terms:
        for name, node in t.symbolic.items():
            symbolic[name] = node if name not in symbolic \
                else symbolic[name] + node
        samplers.extend(t.samplers)
    return GradientSources(symbolic, samplers)


class Cost:
    """
    Base class.

    Subclasses implement :meth:`cost_value`; the default
    :meth:`get_gradients` differentiates it exactly. Costs that need random
    variables per batch (masks) declare them as graph variables and fill
    them in :meth:`sample_bindings`, which keeps graph evaluation pure.
    """

    supervised = False

    def __init__(self):
        self._random_vars = weakref.WeakKeyDictionary()
        self.rng = make_rng(None)

    def set_rng(self, rng) -> None:
        self.rng = make_rng(rng)

    def cost_value(self, model: Model, data: dict) -> Node | None:
        raise NotImplementedError

    def get_gradients(self, model: Model, data: dict,
                      rng=None) -> GradientSources:
        if rng is not None:
            self.set_rng(rng)
        value = self.cost_value(model, data)
        if value is None:
            raise CostError(f"{type(self).__name__} has no value to "
                            f"differentiate")
        params = model.param_nodes(data["X"].graph)
        grads = value.graph.grad(value, list(params.values()))
        return GradientSources(dict(zip(params, grads)))

    def monitoring_value(self, model: Model, data: dict) -> Node | None:
        """The cost value with all random masks switched off."""
        return self.cost_value(model, data)

    def get_monitoring_channels(self, model: Model, data: dict) -> dict:
        value = self.monitoring_value(model, data)
        return {} if value is None else {self.channel_name: value}

    channel_name = "cost"

    def check_data(self, data: dict) -> None:
        if self.supervised and data.get("y") is None:
            raise CostError(f"{type(self).__name__} is supervised but the "
                            f"data has no targets")

    def compatibility_errors(self, model: Model, has_targets: bool) -> list:
        """Reasons this cost cannot be used with ``model`` (for validation)."""
        if self.supervised and not has_targets:
            return [f"{type(self).__name__} needs targets but the dataset "
                    f"has none"]
        return []

    def _random_variable(self, graph: Graph, key: tuple, shape,
                         sampler) -> Node:
        """Declare (once per ``key``) a graph variable filled by
        ``sampler(n, rng)`` in :meth:`sample_bindings`. Building the value
        and the gradients on the same data therefore shares one mask."""
        entries = self._random_vars.setdefault(graph, {})
        if key not in entries:
            name = f"random_{len(graph)}_{'_'.join(map(str, key))}"
            entries[key] = (graph.variable(name, shape), sampler)
        return entries[key][0]

    def sample_bindings(self, graph: Graph, batch: dict) -> dict:
        """Fresh values for the random variables this cost declared."""
        n = batch["X"].shape[0]
        return {node: sampler(n, self.rng)
                for node, sampler in self._random_vars.get(graph, {}).values()}


class _OutputCost(Cost):
    """A supervised cost defined on a model's output ``y_hat``."""

    supervised = True

    def cost_from_output(self, y_hat: Node, y: Node) -> Node:
        raise NotImplementedError

    def cost_value(self, model, data):
        self.check_data(data)
        return self.cost_from_output(model.fprop(data["X"]), data["y"])

    def compatibility_errors(self, model, has_targets):
        errors = super().compatibility_errors(model, has_targets)
        if not hasattr(model, "fprop"):
            errors.append(f"{type(self).__name__} needs a model with fprop, "
                          f"got {type(model).__name__}")
        return errors


class NLLSoftmax(_OutputCost):
    """Mean negative log-probability of the target class under a softmax
    output. Targets are one-hot rows."""

    channel_name = "nll"

    def cost_from_output(self, y_hat, y):
        if y_hat.op != "softmax":
            raise CostError("NLLSoftmax needs a model whose output layer is "
                            "softmax")
        logits = y_hat.graph.nodes[y_hat.parents[0]]
        log_p = G.log_softmax(logits)
        return -G.mean(G.sum(y * log_p, axis=1))

    def misclass(self, y_hat, y):
        wrong = y_hat.graph.apply("not_equal", G.argmax(y_hat), G.argmax(y))
        return G.mean(wrong)

    def get_monitoring_channels(self, model, data):
        self.check_data(data)
        y_hat = model.fprop(data["X"])
        return {"nll": self.cost_from_output(y_hat, data["y"]),
                "misclass": self.misclass(y_hat, data["y"])}

    def compatibility_errors(self, model, has_targets):
        errors = super().compatibility_errors(model, has_targets)
        if isinstance(model, MLP) and model.layers[-1].activation != "softmax":
            errors.append("NLLSoftmax needs the last MLP layer to be softmax, "
                          f"got {model.layers[-1].activation}")
        return errors


class GaussianMSE(_OutputCost):
    """Mean over all elements of ``(y_hat - y)^2``.

    Equals ``2 sigma^2 / k`` times the Gaussian negative log-likelihood with
    fixed variance, up to an additive constant (``k`` outputs per example).
    """

    channel_name = "mse"

    def cost_from_output(self, y_hat, y):
        return G.mean(G.square(y_hat - y))


class WeightDecay(Cost):
    """``sum_i coeff_i * ||W_i||^2`` over the model's weight matrices.

    ``coeffs`` is a single number or one number per weight matrix.
    """

    channel_name = "weight_decay"

    def __init__(self, coeffs=1e-4):
        super().__init__()
        self.coeffs = coeffs

    def cost_value(self, model, data):
        names = model.get_weight_names()
        coeffs = self.coeffs
        if np.isscalar(coeffs):
            coeffs = [coeffs] * len(names)
        if len(coeffs) != len(names):
            raise CostError(f"WeightDecay has {len(coeffs)} coefficients for "
                            f"{len(names)} weight matrices")
        params = model.param_nodes(data["X"].graph)
        total = None
        for coeff, name in zip(coeffs, names):
            term = G.sum(G.square(params[name])) * float(coeff)
            total = term if total is None else total + term
        return total


class DropoutCost(Cost):
    """
    Train an output cost on a forward pass where each layer's input is
    multiplied by a Bernoulli(include_prob) mask scaled by
    ``input_scale`` (default ``1/include_prob``). Monitoring channels come
    from the base cost on the clean forward pass.

    Parameters
    ----------
    cost : output cost (NLLSoftmax, GaussianMSE)
    default_input_include_prob : float in (0, 1]
    input_include_probs : dict, optional
        Layer name -> include probability overrides.
    input_scales : dict, optional
        Layer name -> scale overrides.
    """

    def __init__(self, cost: Cost, default_input_include_prob: float = 0.5,
                 input_include_probs: dict | None = None,
                 input_scales: dict | None = None, seed: int | None = None):
        super().__init__()
        if not isinstance(cost, _OutputCost):
            raise CostError("dropout wraps an output cost (nll_softmax or "
                            "gaussian_mse)")
        self.cost = cost
        self.default_input_include_prob = default_input_include_prob
        self.input_include_probs = dict(input_include_probs or {})
        self.input_scales = dict(input_scales or {})
        for p in [default_input_include_prob,
                  *self.input_include_probs.values()]:
            if not 0.0 < p <= 1.0:
                raise CostError(f"include probability must be in (0, 1], "
                                f"got {p}")
        self.seed = seed
        self.rng = make_rng(seed)
        self.supervised = cost.supervised

    def layer_schedule(self, model: MLP):
        out = []
        for layer in model.layers:
            p = self.input_include_probs.get(layer.layer_name,
                                             self.default_input_include_prob)
            scale = self.input_scales.get(layer.layer_name, 1.0 / p)
            out.append((p, scale))
        return out

    def masked_output(self, model: MLP, X: Node) -> Node:
        graph = X.graph
        masks = {}
        for i, (p, scale) in enumerate(self.layer_schedule(model)):
            if p == 1.0 and scale == 1.0:
                continue
            space = model.layers[i].input_space

            def sampler(n, rng, p=p, scale=scale, space=space):
                keep = rng.random(space.batch_shape(n)) < p
                return keep.astype(np.float64) * scale

            masks[i] = self._random_variable(
                graph, ("mask", X.id, i), space.batch_shape(None), sampler)
        return model.dropout_fprop(X, masks)

    def cost_value(self, model, data):
        self.cost.check_data(data)
        y_hat = self.masked_output(model, data["X"])
        return self.cost.cost_from_output(y_hat, data["y"])

    def monitoring_value(self, model, data):
        return self.cost.cost_value(model, data)

    def get_monitoring_channels(self, model, data):
        return self.cost.get_monitoring_channels(model, data)

    def compatibility_errors(self, model, has_targets):
        errors = self.cost.compatibility_errors(model, has_targets)
        if not isinstance(model, MLP):
            errors.append("dropout needs an MLP")
        return errors


class SumOfCosts(Cost):
    """``sum_i c_i J_i``. The value is ``None`` if any term has none.

    ``costs`` is a list of ``[coefficient, cost]`` pairs or of bare costs
    (coefficient 1).
    """

    def __init__(self, costs):
        super().__init__()
        self.terms = []
        for item in costs:
            if isinstance(item, Cost):
                self.terms.append((1.0, item))
            else:
                coeff, cost = item
                coeff = float(coeff)
                if not np.isfinite(coeff):
                    raise CostError("SumOfCosts coefficients must be finite")
                self.terms.append((coeff, cost))
        self.supervised = any(c.supervised for _, c in self.terms)

    def set_rng(self, rng):
        super().set_rng(rng)
        for _, cost in self.terms:
            cost.set_rng(self.rng.integers(0, 2 ** 63))

    def cost_value(self, model, data):
        total = None
        for coeff, cost in self.terms:
            value = cost.cost_value(model, data)
            if value is None:
                return None
            term = value * coeff
            total = term if total is None else total + term
        return total

    def monitoring_value(self, model, data):
        total = None
        for coeff, cost in self.terms:
            value = cost.monitoring_value(model, data)
            if value is None:
                return None
            term = value * coeff
            total = term if total is None else total + term
        return total

    def get_gradients(self, model, data, rng=None):
        if rng is not None:
            self.set_rng(rng)
        return merge_gradients(cost.get_gradients(model, data).scaled(coeff)
                               for coeff, cost in self.terms)

    def get_monitoring_channels(self, model, data):
        channels = {}
        for i, (_, cost) in enumerate(self.terms):
            for name, node in cost.get_monitoring_channels(model,
                                                           data).items():
                channels[f"term{i}_{name}"] = node
        return channels

    def sample_bindings(self, graph, batch):
        out = {}
        for _, cost in self.terms:
            out.update(cost.sample_bindings(graph, batch))
        return out

    def compatibility_errors(self, model, has_targets):
        errors = []
        for _, cost in self.terms:
            errors.extend(cost.compatibility_errors(model, has_targets))
        return errors


class DAEReconstruction(Cost):
    """Cross-entropy between the clean input and the reconstruction of its
    corrupted copy; masks are sampled per batch."""

    channel_name = "reconstruction_xent"

    def __init__(self, seed: int | None = None):
        super().__init__()
        self.seed = seed
        self.rng = make_rng(seed)

    @staticmethod
    def cross_entropy(x, recon):
        ll = x * G.log(recon) + (1.0 - x) * G.log(1.0 - recon)
        return -G.mean(G.sum(ll, axis=1))

    def cost_value(self, model, data, mask: Node | None = None):
        X = data["X"]
        if mask is None and model.corruption_level > 0:
            mask = self._random_variable(
                X.graph, ("mask", X.id), X.shape,
                lambda n, rng: model.sample_mask((n, model.nvis), rng))
        _, recon = model.forward(X, mask)
        return self.cross_entropy(X, recon)

    def monitoring_value(self, model, data):
        _, recon = model.forward(data["X"], None)
        return self.cross_entropy(data["X"], recon)

    def compatibility_errors(self, model, has_targets):
        if not isinstance(model, DenoisingAutoencoder):
            return [f"dae_xent needs a denoising autoencoder, got "
                    f"{type(model).__name__}"]
        return []


class CD(Cost):
    """
    Contrastive divergence with ``k`` Gibbs steps started at the data.

    The log-likelihood is intractable, so there is no value. The gradient
    estimate of the negative log-likelihood is
    ``E_recon[stats] - E_data[stats]`` with hidden units at their
    conditional means. Hidden and visible states are sampled at every step;
    with ``mean_field_last`` the final visible state is its mean instead.
    """

    def __init__(self, k: int = 1, mean_field_last: bool = False,
                 seed: int | None = None):
        super().__init__()
        if int(k) < 1:
            raise CostError("k must be >= 1")
        self.k = int(k)
        self.mean_field_last = mean_field_last
        self.seed = seed
        self.rng = make_rng(seed)

    def cost_value(self, model, data):
        return None

    def get_monitoring_channels(self, model, data):
        return {}

    def _run_chain(self, model: RBM, v):
        for step in range(self.k):
            h, _ = model.sample_h(v, self.rng)
            v, p = model.sample_v(h, self.rng)
            if self.mean_field_last and step == self.k - 1:
                v = p
        return v

    def negative_phase(self, model: RBM, X):
        return self._run_chain(model, X)

    def get_gradients(self, model, data, rng=None):
        if rng is not None:
            self.set_rng(rng)

        def sampler(batch):
            X = batch["X"]
            pos = model.sufficient_statistics(X)
            neg = model.sufficient_statistics(self.negative_phase(model, X))
            return {name: neg[name] - pos[name] for name in pos}

        return GradientSources({}, [(1.0, sampler)])

    def compatibility_errors(self, model, has_targets):
        if not isinstance(model, RBM):
            return [f"{type(self).__name__} needs an RBM, got "
                    f"{type(model).__name__}"]
        return []


class PCD(CD):
    """
    Persistent contrastive divergence: the negative phase advances
    ``num_chains`` persistent chains by ``k`` steps per batch instead of
    restarting at the data.
    """

    def __init__(self, num_chains: int = 10, k: int = 1,
                 seed: int | None = None):
        super().__init__(k, seed=seed)
        if int(num_chains) < 1:
            raise CostError("num_chains must be >= 1")
        self.num_chains = int(num_chains)
        self.chains = None

    def negative_phase(self, model, X):
        if self.chains is None:
            self.chains = (self.rng.random((self.num_chains, model.nvis))
                           < 0.5).astype(np.float64)
        self.chains = self._run_chain(model, self.chains)
        return self.chains

    def get_state(self) -> dict:
        return {} if self.chains is None else {"pcd_chains": self.chains}

    def set_state(self, state: dict) -> None:
        if "pcd_chains" in state:
            self.chains = np.asarray(state["pcd_chains"], dtype=np.float64)
