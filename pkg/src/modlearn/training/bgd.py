"""Batch gradient descent with accumulated minibatch gradients."""

from __future__ import annotations

import numpy as np

from ..datasets import ITERATION_MODES
from ..rng import make_rng
from .base import Objective, TrainingAlgorithm
from .linesearch import LINE_SEARCHES

__all__ = ["BGD"]


def _dot(a: dict, b: dict) -> float:
    return float(sum(np.vdot(a[n], b[n]) for n in a))


class BGD(TrainingAlgorithm):
    """
    Batch gradient descent with a line search.

    Each step reads ``batches_per_step`` minibatches, averages their
    gradients (weighted by minibatch size, so a partition of the data gives
    the full-batch gradient) and searches along either ``-g`` or a
    Polak-Ribiere conjugate direction. Each group of minibatches gets
    ``updates_per_batch`` line-searched updates.

    Parameters
    ----------
    cost : Cost
        Must have a value.
    batch_size : int, optional
        Minibatch size; ``None`` uses the whole dataset as one batch.
    batches_per_step : int
        Minibatches averaged per update (``m``).
    updates_per_batch : int
    conjugate : bool
        Use nonlinear conjugate gradient directions. ``beta`` is clamped at
        zero, the direction resets to ``-g`` if it stops being a descent
        direction, and every ``reset_every`` iterations (default: the
        number of scalar parameters).
    line_search : {"backtracking", "bracketing"}
    c1, shrink, max_halvings : float, float, int
        Armijo constant, backtracking factor and backtracking limit.
    """

    def __init__(self, cost, batch_size: int | None = None,
                 batches_per_step: int = 1, updates_per_batch: int = 1,
                 conjugate: bool = False, line_search: str = "backtracking",
                 c1: float = 1e-4, shrink: float = 0.5,
                 max_halvings: int = 50, reset_every: int | None = None,
                 train_iteration_mode: str = "sequential",
                 termination_criterion=None, monitoring_dataset=None,
                 monitoring_batch_size: int | None = None,
                 seed: int | None = None):
        super().__init__()
        if int(batches_per_step) < 1:
            raise ValueError("batches_per_step must be >= 1")
        if int(updates_per_batch) < 1:
            raise ValueError("updates_per_batch must be >= 1")
        if line_search not in LINE_SEARCHES:
            raise ValueError(f"unknown line search {line_search!r}; expected "
                             f"one of {sorted(LINE_SEARCHES)}")
        if train_iteration_mode not in ITERATION_MODES:
            raise ValueError(f"unknown iteration mode "
                             f"{train_iteration_mode!r}")
        if not 0 < c1 < 1 or not 0 < shrink < 1:
            raise ValueError("need 0 < c1 < 1 and 0 < shrink < 1")
        self.cost = cost
        self.batch_size = batch_size
        self.batches_per_step = int(batches_per_step)
        self.updates_per_batch = int(updates_per_batch)
        self.conjugate = bool(conjugate)
        self.line_search = line_search
        self.c1, self.shrink = float(c1), float(shrink)
        self.max_halvings = int(max_halvings)
        self.reset_every = reset_every
        self.train_iteration_mode = train_iteration_mode
        self.termination_criterion = termination_criterion
        self.monitoring_dataset = monitoring_dataset
        self.monitoring_batch_size = monitoring_batch_size
        self.seed = seed
        self.rng = make_rng(seed)
        self.objective = None
        # one record per line search:
        # (f0, slope0, step, f_step, success)
        self.search_log: list[tuple] = []
        self.failures_this_epoch = 0

    def setup(self, model, dataset):
        self.objective = Objective(model, self.cost, dataset, need_value=True)
        if self.reset_every is None:
            self.reset_every = int(sum(v.size for v in
                                       model.get_params().values()))
        super().setup(model, dataset)

    def _add_channels(self, monitor):
        monitor.add_channel("line_search_failures",
                            lambda epoch: self.failures_this_epoch)

    # ------------------------------------------------------------------

    def _groups(self, dataset):
        batch_size = self.batch_size or dataset.num_examples
        group = []
        for X, y in dataset.iterator(self.train_iteration_mode, batch_size,
                                     rng=self.rng):
            group.append((X, y))
            if len(group) == self.batches_per_step:
                yield group
                group = []
        if group:
            yield group

    def accumulate(self, group, params=None):
        """Size-weighted mean value and gradient over the minibatches of
        ``group``, with one fresh sample of any random variables per
        minibatch. Returns ``(value, grads, bindings)``."""
        obj = self.objective
        total = sum(X.shape[0] for X, _ in group)
        grads = {n: 0.0 for n in obj.names}
        value = 0.0
        all_bindings = []
        for X, y in group:
            b = obj.bindings(X, y, params)
            w = X.shape[0] / total
            g = obj.gradients(X, y, b)
            for n in obj.names:
                grads[n] = grads[n] + w * g[n]
            value += w * obj.evaluate(b)
            all_bindings.append((w, b))
        return value, grads, all_bindings

    def _value_at(self, params, weighted_bindings):
        value = 0.0
        for w, b in weighted_bindings:
            b = dict(b)
            b.update(params)
            value += w * self.objective.evaluate(b)
        return value

    def _step_group(self, group):
        model = self.model
        obj = self.objective
        search = LINE_SEARCHES[self.line_search]
        g_prev = d_prev = None
        since_reset = 0
        for _ in range(self.updates_per_batch):
            theta = model.get_params()
            f0, g, weighted = self.accumulate(group, theta)
            d = {n: -g[n] for n in obj.names}
            if self.conjugate and g_prev is not None \
                    and since_reset < self.reset_every:
                denom = _dot(g_prev, g_prev)
                beta = 0.0 if denom == 0 else max(
                    0.0, _dot(g, {n: g[n] - g_prev[n] for n in g}) / denom)
                d = {n: -g[n] + beta * d_prev[n] for n in obj.names}
                if _dot(g, d) >= 0:
                    d = {n: -g[n] for n in obj.names}
                    since_reset = 0
            else:
                since_reset = 0
            slope0 = _dot(g, d)
            if not slope0 < 0:
                # zero gradient: nothing to do
                self.search_log.append((f0, slope0, 0.0, f0, True))
                break

            def f(t, theta=theta, d=d, weighted=weighted):
                trial = {n: theta[n] + t * d[n] for n in theta}
                return self._value_at(trial, weighted)

            res = search(f, f0, slope0, c1=self.c1, shrink=self.shrink,
                         max_halvings=self.max_halvings)
            self.search_log.append((f0, slope0, res.step, res.value,
                                    res.success))
            if not res.success:
                self.failures_this_epoch += 1
                g_prev = d_prev = None
                continue
            proposed = {n: theta[n] + res.step * d[n] for n in theta}
            model.set_params(model.censor_updates(proposed))
            g_prev, d_prev = g, d
            since_reset += 1

    def train(self, dataset):
        self._check_setup()
        self.failures_this_epoch = 0
        for group in self._groups(dataset):
            self._step_group(group)
        self.epochs_seen += 1

    def get_state(self):
        if hasattr(self.cost, "get_state"):
            return dict(self.cost.get_state())
        return {}
