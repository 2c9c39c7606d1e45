"""The framework types available to experiment files."""

from __future__ import annotations

import numpy as np

from .. import costs, datasets, monitor, preprocessing, training
from ..costs import Cost
from ..datasets import DenseDesignMatrix
from ..models import (MLP, RBM, ConvLayer, DenoisingAutoencoder, Layer,
                      Linear, Model, RectifiedLinear, Sigmoid, Softmax, Tanh)
from ..monitor import TerminationCriterion
from ..preprocessing import Preprocessor
from ..spaces import Conv2DSpace, VectorSpace
from ..training import TrainExtension, TrainingAlgorithm
from .registry import ConfigPath, Registry

__all__ = ["default_registry"]

_Monitoring = DenseDesignMatrix | dict[str, DenseDesignMatrix] | None
_Criterion = TerminationCriterion | None


def _with_preprocessor(ds, preprocessor, fit_preprocessor):
    if preprocessor is not None:
        ds.preprocessor = preprocessor
        preprocessor.apply(ds, can_fit=fit_preprocessor)
    return ds


def csv_dataset(path: ConfigPath, label_column: int | str | None = None,
                num_classes: int | None = None,
                view: Conv2DSpace | None = None,
                preprocessor: Preprocessor | None = None,
                fit_preprocessor: bool = True):
    ds = datasets.load_csv(path, label_column, num_classes, view)
    return _with_preprocessor(ds, preprocessor, fit_preprocessor)


def npy_dataset(X: ConfigPath, y: ConfigPath | None = None,
                view: Conv2DSpace | None = None,
                preprocessor: Preprocessor | None = None,
                fit_preprocessor: bool = True):
    data = datasets.load_npy(X)
    targets = None if y is None else datasets.load_npy(y)
    return DenseDesignMatrix(data, targets, view=view, source=str(X),
                             preprocessor=preprocessor,
                             fit_preprocessor=fit_preprocessor)


def xor_dataset():
    return datasets.xor_dataset()


def two_gaussians(num_examples: int = 400, dim: int = 2,
                  separation: float = 3.0, seed: int | None = None,
                  preprocessor: Preprocessor | None = None,
                  fit_preprocessor: bool = True):
    ds = datasets.two_gaussians(num_examples, dim, separation, seed)
    return _with_preprocessor(ds, preprocessor, fit_preprocessor)


def binary_prototypes(num_examples: int = 200, dim: int = 4,
                      num_prototypes: int = 2, flip_prob: float = 0.1,
                      seed: int | None = None):
    return datasets.binary_prototypes(num_examples, dim, num_prototypes,
                                      flip_prob, seed)


_LAYER_TYPES = {"init_W": np.ndarray | None, "init_b": np.ndarray | None}


def default_registry() -> Registry:
    r = Registry()
    # harness and algorithms
    r.register("train.harness", training.Train, {
        "dataset": DenseDesignMatrix, "model": Model,
        "algorithm": TrainingAlgorithm | None,
        "extensions": list[TrainExtension]})
    r.register("train.sgd", training.SGD, {
        "cost": Cost, "termination_criterion": _Criterion,
        "monitoring_dataset": _Monitoring})
    r.register("train.bgd", training.BGD, {
        "cost": Cost, "termination_criterion": _Criterion,
        "monitoring_dataset": _Monitoring})
    r.register("train.default", training.DefaultTrainingAlgorithm, {
        "termination_criterion": _Criterion,
        "monitoring_dataset": _Monitoring})
    r.register("train.momentum", training.Momentum)
    r.register("train.polyak", training.PolyakAveraging)
    r.register("extension.monitor_export", training.MonitorExport)
    # models and layers
    r.register("model.mlp", MLP, {"layers": list[Layer],
                                  "nonnegative": list[str]})
    r.register("model.rbm", RBM, {"nonnegative": list[str]})
    r.register("model.dae", DenoisingAutoencoder, {"nonnegative": list[str]})
    for name, cls in [("linear", Linear), ("sigmoid", Sigmoid),
                      ("tanh", Tanh), ("relu", RectifiedLinear),
                      ("softmax", Softmax)]:
        r.register(f"layer.{name}", cls, _LAYER_TYPES)
    r.register("layer.conv2d", ConvLayer, dict(
        _LAYER_TYPES, kernel_shape=list[int] | int,
        pool_shape=list[int] | int | None, pool_stride=list[int] | int | None,
        input_shape=list[int] | None, stride=list[int] | int,
        pad=list[int] | int))
    # costs
    r.register("cost.nll_softmax", costs.NLLSoftmax)
    r.register("cost.gaussian_mse", costs.GaussianMSE)
    r.register("cost.weight_decay", costs.WeightDecay,
               {"coeffs": float | list[float]})
    r.register("cost.dropout", costs.DropoutCost, {
        "cost": Cost, "input_include_probs": dict[str, float] | None,
        "input_scales": dict[str, float] | None})
    r.register("cost.sum", costs.SumOfCosts, {"costs": list})
    r.register("cost.dae_xent", costs.DAEReconstruction)
    r.register("cost.cd", costs.CD)
    r.register("cost.pcd", costs.PCD)
    # data
    r.register("dataset.dense", DenseDesignMatrix, {
        "X": np.ndarray, "y": np.ndarray | None,
        "preprocessor": Preprocessor | None})
    r.register("dataset.csv", csv_dataset)
    r.register("dataset.npy", npy_dataset)
    r.register("dataset.xor", xor_dataset)
    r.register("dataset.two_gaussians", two_gaussians)
    r.register("dataset.binary_prototypes", binary_prototypes)
    r.register("space.vector", VectorSpace)
    r.register("space.conv2d", Conv2DSpace, {"axes": str | list[str]})
    r.register("preprocessing.standardize", preprocessing.Standardize)
    r.register("preprocessing.gcn", preprocessing.GlobalContrastNormalize)
    r.register("preprocessing.pca", preprocessing.PCA)
    r.register("preprocessing.zca", preprocessing.ZCA)
    r.register("preprocessing.pipeline", preprocessing.Pipeline,
               {"items": list[Preprocessor]})
    # termination
    r.register("termination.epoch_counter", monitor.EpochCounter)
    r.register("termination.monitor_based", monitor.MonitorBased)
    r.register("termination.and", monitor.And,
               {"criteria": list[TerminationCriterion]})
    r.register("termination.or", monitor.Or,
               {"criteria": list[TerminationCriterion]})
    return r

