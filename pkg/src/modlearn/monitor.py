"""
Learning-curve recording and termination criteria.

The :class:`Monitor` evaluates named scalar channels on named datasets at
every measurement point (epoch 0 before any training, then after each
epoch). Channel names are ``<dataset>_<channel>``, e.g. ``valid_misclass``.
Measurements always use full sequential passes with no random masks.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, Node

log = logging.getLogger(__name__)

__all__ = ["Channel", "Monitor", "MonitorError", "TerminationCriterion",
           "EpochCounter", "MonitorBased", "And", "Or", "read_records"]


class MonitorError(ValueError):
    pass


@dataclass
class Channel:
    name: str
    dataset: str | None
    values: list = field(default_factory=list)  # (epoch, value) pairs

    def record(self, epoch: int, value: float) -> None:
        if self.values and epoch <= self.values[-1][0]:
            raise MonitorError(f"channel {self.name}: epoch {epoch} is not "
                               f"after {self.values[-1][0]}")
        self.values.append((epoch, float(value)))

    @property
    def epochs(self):
        return [e for e, _ in self.values]

    @property
    def series(self):
        return [v for _, v in self.values]


class _DatasetProbe:
    """Channel expressions compiled for one monitoring dataset."""

    def __init__(self, name, dataset, batch_size):
        self.name = name
        self.dataset = dataset
        self.batch_size = batch_size
        self.graph = Graph()
        self.X = self.graph.variable("X", (None, dataset.X.shape[1]))
        self.y = None if dataset.y is None else self.graph.variable(
            "y", (None, dataset.y.shape[1]))
        self.nodes: dict[str, Node] = {}

    @property
    def data(self):
        return {"X": self.X, "y": self.y}

    def measure(self, model) -> dict:
        names = list(self.nodes)
        if not names:
            return {}
        totals = np.zeros(len(names))
        count = 0
        batch_size = self.batch_size or self.dataset.num_examples
        for X, y in self.dataset.iterator("sequential", batch_size):
            bindings = model.bindings()
            bindings[self.X] = X
            if self.y is not None:
                bindings[self.y] = y
            values = self.graph.eval([self.nodes[n] for n in names], bindings)
            totals += X.shape[0] * np.array([float(v) for v in values])
            count += X.shape[0]
        return dict(zip(names, totals / count))


class Monitor:
    """
    Records channel values over training.

    Parameters
    ----------
    model : Model
        Parameters are read from the model at every measurement.
    """

    def __init__(self, model=None):
        self.model = model
        self.channels: dict[str, Channel] = {}
        self._probes: dict[str, _DatasetProbe] = {}
        self._callables: dict[str, object] = {}
        self.epochs: list[int] = []

    def add_dataset(self, name: str, dataset, batch_size=None) -> None:
        if name in self._probes:
            raise MonitorError(f"monitoring dataset {name!r} added twice")
        self._probes[name] = _DatasetProbe(name, dataset, batch_size)

    def setup(self, model, cost=None, datasets=None, batch_size=None) -> None:
        """Register model and cost channels on every monitoring dataset."""
        self.model = model
        for name, dataset in (datasets or {}).items():
            if name not in self._probes:
                self.add_dataset(name, dataset, batch_size)
        for name, probe in self._probes.items():
            nodes = {}
            if cost is not None:
                if cost.supervised and probe.y is None:
                    raise MonitorError(f"monitoring dataset {name!r} has no "
                                       f"targets but the cost needs them")
                value = cost.monitoring_value(model, probe.data)
                if value is not None:
                    nodes["objective"] = value
                nodes.update(cost.get_monitoring_channels(model, probe.data))
            nodes.update(model.get_monitoring_channels(probe.data))
            for channel, node in nodes.items():
                self.add_channel(f"{name}_{channel}", node, dataset=name)

    def add_channel(self, name: str, expr, dataset: str | None = None):
        """Add a channel computed from a graph node on ``dataset`` or, with
        ``dataset=None``, by calling ``expr(epoch)``."""
        if name in self.channels:
            raise MonitorError(f"duplicate channel {name!r}")
        if self.epochs:
            raise MonitorError("channels must be added before the first "
                               "measurement")
        if dataset is None:
            self._callables[name] = expr
        else:
            probe = self._probes[dataset]
            if expr.shape not in ((), (1,)):
                raise MonitorError(f"channel {name!r} is not scalar")
            probe.nodes[name[len(dataset) + 1:]
                        if name.startswith(dataset + "_") else name] = expr
        self.channels[name] = Channel(name, dataset)

    def channel_names(self) -> list[str]:
        return list(self.channels)

    def measure(self, epoch: int) -> dict:
        """Evaluate every channel and append the values for ``epoch``."""
        row = {}
        for dsname, probe in self._probes.items():
            for short, value in probe.measure(self.model).items():
                key = short if short in self.channels else f"{dsname}_{short}"
                row[key] = value
        for name, fn in self._callables.items():
            row[name] = float(fn(epoch))
        for name, channel in self.channels.items():
            value = row[name]
            if not math.isfinite(value):
                log.warning("channel %s is %r at epoch %d", name, value, epoch)
            channel.record(epoch, value)
        self.epochs.append(epoch)
        return row

    def records(self) -> list[dict]:
        rows = []
        for i, epoch in enumerate(self.epochs):
            row = {"epoch": epoch}
            for name, channel in self.channels.items():
                row[name] = channel.values[i][1]
            rows.append(row)
        return rows

    def export(self, path, fmt: str | None = None) -> None:
        """Write the records as CSV or JSONL (chosen by ``fmt`` or the file
        extension). Floats are written with 17 significant digits."""
        if not self.epochs:
            raise MonitorError("nothing to export: no measurements taken")
        fmt = fmt or ("jsonl" if str(path).endswith(".jsonl") else "csv")
        names = list(self.channels)
        rows = self.records()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if fmt == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["epoch"] + names)
                for row in rows:
                    writer.writerow([row["epoch"]] +
                                    [_fmt_float(row[n]) for n in names])
            elif fmt == "jsonl":
                for row in rows:
                    parts = [f'"epoch": {row["epoch"]}']
                    parts += [f"{json.dumps(n)}: {_fmt_float(row[n], True)}"
                              for n in names]
                    fh.write("{" + ", ".join(parts) + "}\n")
            else:
                raise MonitorError(f"unknown export format {fmt!r}")


def _fmt_float(value: float, json_style: bool = False) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return format(value, ".17g")


def read_records(path) -> list[dict]:
    """Parse a CSV or JSONL monitor export back into rows."""
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        if path.endswith(".jsonl"):
            return [json.loads(line) for line in fh if line.strip()]
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {"epoch": int(raw.pop("epoch"))}
            row.update({k: float(v) for k, v in raw.items()})
            rows.append(row)
        return rows


# ---------------------------------------------------------------------------
# Termination criteria
# ---------------------------------------------------------------------------


class TerminationCriterion:
    """Decides whether training should go on. ``True`` means continue."""

    def continue_learning(self, monitor: Monitor, epochs_done: int) -> bool:
        raise NotImplementedError

    def channels_needed(self) -> list[str]:
        return []

    def check(self, monitor: Monitor) -> None:
        available = set(monitor.channel_names())
        missing = [c for c in self.channels_needed() if c not in available]
        if missing:
            raise MonitorError(
                f"termination criterion refers to unknown channel(s) "
                f"{', '.join(missing)}; available: "
                f"{', '.join(sorted(available)) or 'none'}")


class EpochCounter(TerminationCriterion):
    """Continue while fewer than ``max_epochs`` epochs have been trained."""

    def __init__(self, max_epochs: int):
        if int(max_epochs) < 0:
            raise MonitorError("max_epochs must be >= 0")
        self.max_epochs = int(max_epochs)

    def continue_learning(self, monitor, epochs_done):
        return epochs_done < self.max_epochs


class MonitorBased(TerminationCriterion):
    """
    Early stopping on a channel where lower is better.

    Stops once the best value over the last ``N`` measurements fails to
    beat ``(1 - prop_decrease)`` times the best value measured before them.
    Channels to maximize must be negated first.
    """

    def __init__(self, channel_name: str, N: int = 5,
                 prop_decrease: float = 0.01):
        if int(N) < 1:
            raise MonitorError("N must be >= 1")
        if prop_decrease < 0:
            raise MonitorError("prop_decrease must be >= 0")
        self.channel_name = channel_name
        self.N = int(N)
        self.prop_decrease = float(prop_decrease)

    def channels_needed(self):
        return [self.channel_name]

    def continue_learning(self, monitor, epochs_done):
        try:
            values = monitor.channels[self.channel_name].series
        except KeyError:
            raise MonitorError(f"unknown channel {self.channel_name!r}") \
                from None
        if len(values) <= self.N:
            return True
        recent = min(values[-self.N:])
        earlier = min(values[:-self.N])
        return not recent > (1.0 - self.prop_decrease) * earlier


class And(TerminationCriterion):
    """Continue only while every criterion wants to continue."""

    def __init__(self, criteria):
        self.criteria = list(criteria)

    def continue_learning(self, monitor, epochs_done):
        return all([c.continue_learning(monitor, epochs_done)
                    for c in self.criteria])

    def channels_needed(self):
        return [n for c in self.criteria for n in c.channels_needed()]


class Or(TerminationCriterion):
    """Continue while at least one criterion wants to continue."""

    def __init__(self, criteria):
        self.criteria = list(criteria)

    def continue_learning(self, monitor, epochs_done):
        return any([c.continue_learning(monitor, epochs_done)
                    for c in self.criteria])

    def channels_needed(self):
        return [n for c in self.criteria for n in c.channels_needed()]
