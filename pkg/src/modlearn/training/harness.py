"""The top-level training loop."""

from __future__ import annotations

import logging
import os

from ..checkpoint import save_checkpoint
from ..monitor import Monitor

log = logging.getLogger(__name__)

__all__ = ["Train", "TrainExtension", "MonitorExport"]


class TrainExtension:
    """Hook called by :class:`Train` after every measurement and once at
    the end."""

    def on_monitor(self, harness: "Train") -> None:
        pass

    def on_end(self, harness: "Train") -> None:
        pass


class MonitorExport(TrainExtension):
    """Write the monitor records to ``path`` (CSV, or JSONL when the name
    ends in ``.jsonl``) when training ends."""

    def __init__(self, path: str):
        self.path = path

    def on_end(self, harness):
        harness.monitor.export(self.path)


class Train:
    """
    Ties a dataset, a model and a training algorithm together.

    Parameters
    ----------
    dataset : DenseDesignMatrix
    model : Model
    algorithm : TrainingAlgorithm, optional
        ``None`` lets the model train itself with ``model.train_all``.
    extensions : list of TrainExtension
    save_path : str, optional
        Directory for periodic checkpoints ``epoch_NNNN``.
    save_freq : int
        Checkpoint every ``save_freq`` epochs (0 disables).
    seed : int, optional
        Root seed of the experiment, recorded in checkpoints.
    """

    def __init__(self, dataset, model, algorithm=None, extensions=(),
                 save_path: str | None = None, save_freq: int = 0,
                 seed: int | None = None):
        if int(save_freq) < 0:
            raise ValueError("save_freq must be >= 0")
        self.dataset = dataset
        self.model = model
        self.algorithm = algorithm
        self.extensions = list(extensions)
        self.save_path = save_path
        self.save_freq = int(save_freq)
        self.seed = seed
        self.epochs = 0
        self.monitor = None
        self._ran = False

    def seeds(self) -> dict:
        out = {"root": self.seed, "model": getattr(self.model, "seed", None)}
        if self.algorithm is not None:
            out["algorithm"] = getattr(self.algorithm, "seed", None)
        return out

    def averaged_params(self):
        get = getattr(self.algorithm, "averaged_params", None)
        return get() if get is not None else None

    def save(self, path) -> None:
        state = {} if self.algorithm is None else self.algorithm.get_state()
        save_checkpoint(path, self.model, self.seeds(),
                        averaged=self.averaged_params(), state=state)

    def _measure(self):
        self.monitor.measure(self.epochs)
        for ext in self.extensions:
            ext.on_monitor(self)

    def main_loop(self):
        """Train to termination. Returns ``(model, monitor records)``."""
        if self._ran:
            raise RuntimeError("a Train harness runs once")
        self._ran = True
        if self.algorithm is None:
            self.monitor = Monitor(self.model)
            self.monitor.setup(self.model, None, {"train": self.dataset})
            self._measure()
            self.model.train_all(self.dataset)
            self.epochs = 1
            self._measure()
        else:
            self.algorithm.setup(self.model, self.dataset)
            self.monitor = self.algorithm.monitor
            self._measure()
            while self.algorithm.continue_learning(self.epochs):
                self.algorithm.train(self.dataset)
                self.epochs += 1
                self._measure()
                if self.save_path and self.save_freq and \
                        self.epochs % self.save_freq == 0:
                    self.save(os.path.join(self.save_path,
                                           f"epoch_{self.epochs:04d}"))
                log.debug("epoch %d done", self.epochs)
        polyak = getattr(self.algorithm, "polyak_averaging", None)
        if polyak is not None and polyak.deliver_averaged \
                and polyak.averaged is not None:
            self.model.set_params(polyak.averaged)
        for ext in self.extensions:
            ext.on_end(self)
        return self.model, self.monitor.records()
