"""Serve minibatches to a model's own learning rule."""

from __future__ import annotations

from ..datasets import ITERATION_MODES
from ..models import CapabilityError, supports
from ..rng import make_rng
from .base import TrainingAlgorithm

__all__ = ["DefaultTrainingAlgorithm"]


class DefaultTrainingAlgorithm(TrainingAlgorithm):
    """Calls ``model.train_batch(X, y)`` once per minibatch. No cost is
    involved; the monitor records only the model's own channels."""

    def __init__(self, batch_size: int, termination_criterion=None,
                 train_iteration_mode: str = "sequential",
                 batches_per_iter: int | None = None,
                 monitoring_dataset=None,
                 monitoring_batch_size: int | None = None,
                 seed: int | None = None):
        super().__init__()
        if int(batch_size) < 1:
            raise ValueError("batch_size must be >= 1")
        if train_iteration_mode not in ITERATION_MODES:
            raise ValueError(f"unknown iteration mode "
                             f"{train_iteration_mode!r}")
        self.batch_size = int(batch_size)
        self.termination_criterion = termination_criterion
        self.train_iteration_mode = train_iteration_mode
        self.batches_per_iter = batches_per_iter
        self.monitoring_dataset = monitoring_dataset
        self.monitoring_batch_size = monitoring_batch_size
        self.seed = seed
        self.rng = make_rng(seed)

    def setup(self, model, dataset):
        if not supports(model, "train_batch"):
            raise CapabilityError(f"{type(model).__name__} has no train_batch "
                                  f"learning rule; use SGD or BGD with a "
                                  f"cost")
        super().setup(model, dataset)

    def train(self, dataset):
        self._check_setup()
        for X, y in dataset.iterator(self.train_iteration_mode,
                                     self.batch_size, self.batches_per_iter,
                                     rng=self.rng):
            self.model.train_batch(X, y)
        self.epochs_seen += 1
