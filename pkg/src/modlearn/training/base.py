"""Pieces shared by the training algorithms."""

from __future__ import annotations

import numpy as np

from ..graph import Graph
from ..monitor import Monitor, MonitorError

__all__ = ["TrainingAlgorithm", "TrainingError", "Objective",
           "monitoring_datasets"]


class TrainingError(RuntimeError):
    pass


def monitoring_datasets(monitoring_dataset, dataset) -> dict:
    """Normalize the ``monitoring_dataset`` argument to a name -> dataset
    dict. ``None`` monitors the training set under the name ``train``."""
    if monitoring_dataset is None:
        return {"train": dataset}
    if isinstance(monitoring_dataset, dict):
        return dict(monitoring_dataset)
    return {"train": monitoring_dataset}


class Objective:
    """
    A cost compiled against one model for design-matrix batches.

    Holds the graph, the data variables, the gradient sources and, when
    ``need_value`` is set, the cost value node.
    """

    def __init__(self, model, cost, dataset, need_value=False):
        self.model = model
        self.cost = cost
        self.graph = Graph()
        self.X = self.graph.variable("X", (None, dataset.X.shape[1]))
        self.y = None
        if dataset.y is not None:
            self.y = self.graph.variable("y", (None, dataset.y.shape[1]))
        data = {"X": self.X, "y": self.y}
        if cost.supervised and self.y is None:
            raise TrainingError(f"{type(cost).__name__} needs targets but "
                                f"the training dataset has none")
        self.names = list(model.get_params())
        self.sources = cost.get_gradients(model, data)
        self.value = None
        if need_value:
            self.value = cost.cost_value(model, data)
            if self.value is None:
                raise TrainingError(f"{type(cost).__name__} has no value; "
                                    f"this algorithm needs one for its line "
                                    f"search")

    def bindings(self, X, y, params=None) -> dict:
        """Parameter and data bindings plus fresh samples for the cost's
        random variables."""
        b = dict(self.model.bindings() if params is None else params)
        b[self.X] = X
        if self.y is not None:
            b[self.y] = y
        b.update(self.cost.sample_bindings(self.graph, {"X": X, "y": y}))
        return b

    def gradients(self, X, y, bindings=None) -> dict:
        if bindings is None:
            bindings = self.bindings(X, y)
        batch = {"X": X, "y": y}
        grads = self.sources.evaluate(self.graph, bindings, batch, self.names)
        for name in self.names:
            if not np.all(np.isfinite(grads[name])):
                raise TrainingError(f"non-finite gradient for parameter "
                                    f"{name!r}")
        return grads

    def evaluate(self, bindings) -> float:
        return float(self.graph.eval(self.value, bindings))


class TrainingAlgorithm:
    """
    Adapts a model to a dataset. Call :meth:`setup` once, then :meth:`train`
    once per epoch while :meth:`continue_learning` is true.
    """

    termination_criterion = None
    monitoring_dataset = None
    monitoring_batch_size = None
    cost = None

    def __init__(self):
        self.model = None
        self.monitor = None
        self.epochs_seen = 0

    def setup(self, model, dataset) -> None:
        self.model = model
        self.monitor = Monitor(model)
        self.monitor.setup(model, self.cost,
                           monitoring_datasets(self.monitoring_dataset,
                                               dataset),
                           self.monitoring_batch_size)
        self._add_channels(self.monitor)
        if self.termination_criterion is not None:
            self.termination_criterion.check(self.monitor)

    def _add_channels(self, monitor: Monitor) -> None:
        pass

    def _check_setup(self):
        if self.model is None:
            raise TrainingError(f"{type(self).__name__}.train called before "
                                f"setup")

    def train(self, dataset) -> None:
        raise NotImplementedError

    def continue_learning(self, epochs_done: int) -> bool:
        if self.termination_criterion is None:
            raise MonitorError("no termination criterion configured")
        return self.termination_criterion.continue_learning(self.monitor,
                                                             epochs_done)

    def get_state(self) -> dict:
        """Arrays to store in a checkpoint beside the parameters."""
        return {}
