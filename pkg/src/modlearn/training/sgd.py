"""Stochastic gradient descent with optional momentum and Polyak averaging."""

from __future__ import annotations

import numpy as np

from ..datasets import ITERATION_MODES
from ..rng import make_rng
from .base import Objective, TrainingAlgorithm

__all__ = ["SGD", "Momentum", "PolyakAveraging"]


class Momentum:
    """Heavy-ball momentum: ``v <- mu v - lr g``, ``theta <- theta + v``."""

    def __init__(self, momentum: float = 0.5):
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = float(momentum)
        self.velocity = None

    def step(self, params, grads, learning_rate):
        if self.velocity is None:
            self.velocity = {n: np.zeros_like(v) for n, v in params.items()}
        out = {}
        for name, theta in params.items():
            v = self.momentum * self.velocity[name] - learning_rate * grads[name]
            self.velocity[name] = v
            out[name] = theta + v
        return out


class PolyakAveraging:
    """
    Running arithmetic mean of the parameters after every update made from
    epoch ``start_epoch`` on.

    With ``deliver_averaged`` the harness swaps the averages into the model
    when training ends; the averages are checkpointed either way.
    """

    def __init__(self, start_epoch: int = 0, deliver_averaged: bool = False):
        if int(start_epoch) < 0:
            raise ValueError("start_epoch must be >= 0")
        self.start_epoch = int(start_epoch)
        self.deliver_averaged = bool(deliver_averaged)
        self.count = 0
        self.averaged = None

    def update(self, params, epoch: int) -> None:
        if epoch < self.start_epoch:
            return
        self.count += 1
        if self.averaged is None:
            self.averaged = {n: np.array(v) for n, v in params.items()}
            return
        t = self.count
        for name, theta in params.items():
            avg = self.averaged[name]
            self.averaged[name] = avg + (theta - avg) / t


class SGD(TrainingAlgorithm):
    """
    Minibatch stochastic gradient descent on a cost.

    Parameters
    ----------
    learning_rate : float
        Constant step size, must be positive.
    cost : Cost
    batch_size : int
    train_iteration_mode : str
        One of the dataset iteration schemes.
    batches_per_iter : int, optional
        Batches per epoch (required for ``random_uniform``).
    learning_rule : Momentum, optional
    polyak_averaging : PolyakAveraging, optional
    termination_criterion : TerminationCriterion
    monitoring_dataset : dataset or dict of datasets, optional
    monitoring_batch_size : int, optional
    seed : int, optional
        Seeds the batch order.
    """

    def __init__(self, learning_rate: float, cost, batch_size: int,
                 train_iteration_mode: str = "shuffled_sequential",
                 batches_per_iter: int | None = None,
                 learning_rule: Momentum | None = None,
                 polyak_averaging: PolyakAveraging | None = None,
                 termination_criterion=None, monitoring_dataset=None,
                 monitoring_batch_size: int | None = None,
                 seed: int | None = None):
        super().__init__()
        if not learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got "
                             f"{learning_rate}")
        if int(batch_size) < 1:
            raise ValueError("batch_size must be >= 1")
        if train_iteration_mode not in ITERATION_MODES:
            raise ValueError(f"unknown iteration mode "
                             f"{train_iteration_mode!r}")
        self.learning_rate = float(learning_rate)
        self.cost = cost
        self.batch_size = int(batch_size)
        self.train_iteration_mode = train_iteration_mode
        self.batches_per_iter = batches_per_iter
        self.learning_rule = learning_rule
        self.polyak_averaging = polyak_averaging
        self.termination_criterion = termination_criterion
        self.monitoring_dataset = monitoring_dataset
        self.monitoring_batch_size = monitoring_batch_size
        self.seed = seed
        self.rng = make_rng(seed)
        self.objective = None

    def setup(self, model, dataset):
        self.objective = Objective(model, self.cost, dataset)
        super().setup(model, dataset)

    def train(self, dataset):
        self._check_setup()
        model = self.model
        for X, y in dataset.iterator(self.train_iteration_mode,
                                     self.batch_size, self.batches_per_iter,
                                     rng=self.rng):
            grads = self.objective.gradients(X, y)
            params = model.get_params()
            if self.learning_rule is not None:
                proposed = self.learning_rule.step(params, grads,
                                                   self.learning_rate)
            else:
                proposed = {n: params[n] - self.learning_rate * grads[n]
                            for n in params}
            model.set_params(model.censor_updates(proposed))
            if self.polyak_averaging is not None:
                self.polyak_averaging.update(model.get_params(),
                                             self.epochs_seen)
        self.epochs_seen += 1

    def averaged_params(self):
        if self.polyak_averaging is None:
            return None
        return self.polyak_averaging.averaged

    def get_state(self):
        state = {}
        if self.cost is not None and hasattr(self.cost, "get_state"):
            state.update(self.cost.get_state())
        if self.learning_rule is not None and \
                self.learning_rule.velocity is not None:
            for name, v in self.learning_rule.velocity.items():
                state[f"velocity_{name}"] = v
        return state
