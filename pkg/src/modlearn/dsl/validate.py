"""
Cross-object checks on an instantiated experiment, run before training.

Each check reports a :class:`ValidationError` carrying the object path
and source position of the object at fault.
"""

from __future__ import annotations

from ..datasets import DenseDesignMatrix
from ..graph import Graph
from ..models import supports
from ..monitor import Monitor, MonitorError
from ..spaces import Conv2DSpace, VectorSpace
from ..training import BGD, DefaultTrainingAlgorithm, Train
from ..training.base import monitoring_datasets
from .errors import ConfigErrors, ValidationError
from .instantiate import ExperimentSpec

__all__ = ["validate", "check"]


class _Report:
    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.errors: list[ValidationError] = []

    def add(self, obj, message, suffix=""):
        path, line, col = self.spec.locate(obj)
        self.errors.append(ValidationError(message, line, col,
                                           self.spec.source, path + suffix))


def _data_space(dataset: DenseDesignMatrix):
    return dataset.view if dataset.view is not None \
        else VectorSpace(dataset.X.shape[1])


def _check_input(report, model, dataset, what):
    space = model.input_space
    data_space = _data_space(dataset)
    if space.num_elements() != dataset.X.shape[1] or (
            isinstance(space, Conv2DSpace) and dataset.view is not None
            and (space.rows, space.cols, space.num_channels)
            != (data_space.rows, data_space.cols, data_space.num_channels)):
        report.add(model, f"model input space {space} does not match the "
                   f"{what} space {data_space}")


def _check_targets(report, model, dataset, what):
    out = getattr(model, "output_space", None)
    if out is None or dataset.y is None:
        return
    if out.num_elements() != dataset.y.shape[1]:
        report.add(model, f"model output space {out} does not match the "
                   f"{what} target space {VectorSpace(dataset.y.shape[1])}")


def _has_value(cost, model, dataset) -> bool:
    graph = Graph()
    data = {"X": graph.variable("X", (None, dataset.X.shape[1])), "y": None}
    if dataset.y is not None:
        data["y"] = graph.variable("y", (None, dataset.y.shape[1]))
    return cost.cost_value(model, data) is not None


def validate(spec: ExperimentSpec) -> list[ValidationError]:
    """Return the list of problems (empty when the experiment is sound)."""
    report = _Report(spec)
    harness = spec.root
    if not isinstance(harness, Train):
        report.add(harness, f"the root object must be !obj:train.harness, "
                   f"got {type(harness).__name__}")
        return report.errors
    model, dataset, algorithm = harness.model, harness.dataset, \
        harness.algorithm
    _check_input(report, model, dataset, "training dataset")
    if algorithm is None:
        if not supports(model, "train_all"):
            report.add(harness, f"no algorithm given and "
                       f"{type(model).__name__} cannot train itself")
        return report.errors

    datasets = monitoring_datasets(algorithm.monitoring_dataset, dataset)
    for name, ds in datasets.items():
        if ds is not dataset:
            _check_input(report, model, ds, f"monitoring dataset {name!r}")

    cost = getattr(algorithm, "cost", None)
    if cost is not None:
        for message in cost.compatibility_errors(model, dataset.has_targets):
            report.add(cost, message)
        if cost.supervised:
            _check_targets(report, model, dataset, "training dataset")
            for name, ds in datasets.items():
                if not ds.has_targets:
                    report.add(algorithm, f"monitoring dataset {name!r} has "
                               f"no targets but the cost needs them",
                               ".monitoring_dataset")
                elif ds is not dataset:
                    _check_targets(report, model, ds,
                                   f"monitoring dataset {name!r}")
        if isinstance(algorithm, BGD) and not report.errors and \
                not _has_value(cost, model, dataset):
            report.add(cost, f"BGD line searches need a cost value; "
                       f"{type(cost).__name__} has none")
    if isinstance(algorithm, DefaultTrainingAlgorithm) and \
            not supports(model, "train_batch"):
        report.add(algorithm, f"train.default needs a model with its own "
                   f"train_batch rule; {type(model).__name__} has none")

    batch_size = getattr(algorithm, "batch_size", None)
    mode = getattr(algorithm, "train_iteration_mode", "sequential")
    if batch_size is not None and batch_size > dataset.num_examples:
        report.add(algorithm, f"batch_size {batch_size} exceeds the "
                   f"{dataset.num_examples} training examples",
                   ".batch_size")
    if mode == "random_uniform" and \
            getattr(algorithm, "batches_per_iter", None) is None:
        report.add(algorithm, "random_uniform iteration needs "
                   "batches_per_iter", ".batches_per_iter")

    criterion = algorithm.termination_criterion
    if criterion is None:
        report.add(algorithm, "no termination_criterion given; training "
                   "would never stop", ".termination_criterion")
    elif not report.errors:
        monitor = Monitor(model)
        try:
            monitor.setup(model, cost, datasets,
                          algorithm.monitoring_batch_size)
            algorithm._add_channels(monitor)
            criterion.check(monitor)
        except MonitorError as exc:
            report.add(criterion, str(exc))
        except ValueError as exc:
            report.add(algorithm, f"cannot set up monitoring: {exc}")
    return report.errors


def check(spec: ExperimentSpec) -> None:
    """Raise :class:`ConfigErrors` if :func:`validate` finds problems."""
    errors = validate(spec)
    if errors:
        raise ConfigErrors(errors)
