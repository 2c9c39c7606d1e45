"""
In-memory datasets, iteration schemes, and on-disk formats.

A :class:`DenseDesignMatrix` stores one example per row of ``X`` and,
optionally, targets ``y``. If it has a ``view`` space the same rows can be
presented as a topological (image-shaped) tensor.
"""

from __future__ import annotations

import csv
import io
import logging
import os

import numpy as np

from .rng import make_rng
from .spaces import Conv2DSpace, VectorSpace

log = logging.getLogger(__name__)

__all__ = [
    "DatasetError",
    "DenseDesignMatrix",
    "ITERATION_MODES",
    "iterate_indices",
    "load_csv",
    "load_npy",
    "save_npy",
    "xor_dataset",
    "two_gaussians",
    "binary_prototypes",
]

ITERATION_MODES = ("sequential", "shuffled_sequential", "random_uniform")


class DatasetError(ValueError):
    pass


def iterate_indices(n, batch_size, mode="sequential", num_batches=None,
                    rng=None):
    """Yield index arrays for one pass over ``n`` examples.

    ``sequential`` walks contiguous blocks in order (the last may be short).
    ``shuffled_sequential`` draws one permutation and then walks it in
    blocks. ``random_uniform`` draws ``num_batches`` batches of indices
    uniformly with replacement.
    """
    batch_size = int(batch_size)
    if n <= 0:
        raise DatasetError("cannot iterate over an empty dataset")
    if batch_size < 1:
        raise DatasetError(f"batch_size must be >= 1, got {batch_size}")
    mode = mode.replace("-", "_")
    if mode == "sequential":
        order = np.arange(n)
    elif mode == "shuffled_sequential":
        order = make_rng(rng).permutation(n)
    elif mode == "random_uniform":
        if batch_size > n:
            raise DatasetError(f"random_uniform batch_size {batch_size} "
                               f"exceeds dataset size {n}")
        if num_batches is None:
            num_batches = -(-n // batch_size)
        gen = make_rng(rng)
        for _ in range(int(num_batches)):
            yield gen.integers(0, n, size=batch_size)
        return
    else:
        raise DatasetError(f"unknown iteration mode {mode!r}; expected one "
                           f"of {ITERATION_MODES}")
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class DenseDesignMatrix:
    """
    A dataset held as a dense ``[n, d]`` design matrix.

    Parameters
    ----------
    X : array-like, shape [n, d]
    y : array-like, shape [n, k], optional
        One-hot class labels or regression targets.
    view : Conv2DSpace, optional
        Topological layout of a row; requires ``d == view.num_elements()``.
    preprocessor : Preprocessor, optional
        Applied once at construction with ``fit_preprocessor`` as ``can_fit``.
    """

    def __init__(self, X, y=None, view: Conv2DSpace | None = None,
                 name: str = "", source: str | None = None,
                 preprocessor=None, fit_preprocessor: bool = True):
        X = np.array(X, dtype=np.float64)
        if X.ndim != 2:
            raise DatasetError(f"X must be a [n, d] matrix, got shape "
                               f"{X.shape}")
        if y is not None:
            y = np.array(y, dtype=np.float64)
            if y.ndim == 1:
                y = y[:, None]
            if y.ndim != 2 or y.shape[0] != X.shape[0]:
                raise DatasetError(f"y has shape {y.shape}, expected "
                                   f"{X.shape[0]} rows")
        if view is not None and view.num_elements() != X.shape[1]:
            raise DatasetError(f"view {view} holds {view.num_elements()} "
                               f"elements but rows have {X.shape[1]}")
        self.X = X
        self.y = y
        self.view = view
        self.name = name
        self.source = source
        self.preprocessor = preprocessor
        if preprocessor is not None:
            preprocessor.apply(self, can_fit=fit_preprocessor)

    def __repr__(self):
        return (f"DenseDesignMatrix(n={self.num_examples}, d={self.X.shape[1]}"
                f", targets={'none' if self.y is None else self.y.shape[1]})")

    @property
    def num_examples(self) -> int:
        return self.X.shape[0]

    @property
    def has_targets(self) -> bool:
        return self.y is not None

    @property
    def X_space(self) -> VectorSpace:
        return VectorSpace(self.X.shape[1])

    @property
    def y_space(self) -> VectorSpace | None:
        return None if self.y is None else VectorSpace(self.y.shape[1])

    def get_design_matrix(self, topo=None) -> np.ndarray:
        if topo is None:
            return self.X
        if self.view is None:
            raise DatasetError("dataset has no topological view")
        return self.view.np_format_as(topo, self.X_space)

    def get_topological_view(self, X=None) -> np.ndarray:
        if self.view is None:
            raise DatasetError("dataset has no topological view")
        return self.X_space.np_format_as(self.X if X is None else X,
                                         self.view)

    def set_design_matrix(self, X) -> None:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.num_examples:
            raise DatasetError("replacement design matrix changes the number "
                               "of examples")
        if self.view is not None and X.shape[1] != self.view.num_elements():
            self.view = None
        self.X = X

    def iterator(self, mode="sequential", batch_size=1, num_batches=None,
                 rng=None, topo=False):
        """Yield ``(X_batch, y_batch)`` pairs; ``y_batch`` is ``None`` when
        the dataset has no targets."""
        for idx in iterate_indices(self.num_examples, batch_size, mode,
                                   num_batches, rng):
            X = self.X[idx]
            if topo:
                X = self.get_topological_view(X)
            yield X, (None if self.y is None else self.y[idx])


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def one_hot(labels, num_classes=None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if np.any(labels < 0) or np.any(labels != np.round(labels)):
        raise DatasetError("class labels must be non-negative integers")
    labels = labels.astype(np.int64)
    k = int(labels.max()) + 1 if num_classes is None else int(num_classes)
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def load_csv(path, label_column=None, num_classes=None,
             view: Conv2DSpace | None = None, name=None) -> DenseDesignMatrix:
    """Read a numeric CSV file into a :class:`DenseDesignMatrix`.

    A first line containing any non-numeric cell is taken as a header.
    ``label_column`` (index or header name) holds integer class labels,
    which are one-hot encoded.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    if not rows:
        raise DatasetError(f"{path}: empty CSV file")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    width = len(rows[0]) if rows else len(header or [])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(f"{path}:{i + 1 + (header is not None)}: "
                               f"expected {width} cells, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{path}:{i + 1 + (header is not None)}: non-numeric "
                    f"cell {cell!r} in column {j + 1}") from None
    y = None
    if label_column is not None:
        if isinstance(label_column, str):
            if header is None or label_column not in header:
                raise DatasetError(f"{path}: no column named "
                                   f"{label_column!r}")
            label_column = header.index(label_column)
        label_column = int(label_column) % width
        y = one_hot(data[:, label_column], num_classes)
        data = np.delete(data, label_column, axis=1)
    return DenseDesignMatrix(data, y, view=view,
                             name=name or os.path.basename(str(path)),
                             source=str(path))


_NPY_MAGIC = b"\x93NUMPY"


def load_npy(path) -> np.ndarray:
    """Read a version 1.0, little-endian float64, C-order ``.npy`` file."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    if raw[:6] != _NPY_MAGIC:
        raise DatasetError(f"{path}: not an NPY file (bad magic)")
    if raw[6:8] != b"\x01\x00":
        raise DatasetError(f"{path}: unsupported NPY version "
                           f"{raw[6]}.{raw[7]}, expected 1.0")
    fh = io.BytesIO(raw)
    np.lib.format.read_magic(fh)
    try:
        shape, fortran, dtype = np.lib.format.read_array_header_1_0(fh)
    except ValueError as exc:
        raise DatasetError(f"{path}: malformed NPY header: {exc}") from exc
    if dtype != np.dtype("<f8"):
        raise DatasetError(f"{path}: unsupported dtype {dtype.str}, "
                           f"expected '<f8'")
    if fortran:
        raise DatasetError(f"{path}: Fortran-order arrays are not supported")
    count = int(np.prod(shape, dtype=np.int64))
    body = raw[fh.tell():]
    if len(body) != 8 * count:
        raise DatasetError(f"{path}: expected {8 * count} data bytes, "
                           f"found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(shape).copy()


def save_npy(path, array) -> None:
    array = np.ascontiguousarray(array, dtype="<f8")
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, array, version=(1, 0),
                                  allow_pickle=False)


# ---------------------------------------------------------------------------
# Synthetic datasets used by the shipped configs
# ---------------------------------------------------------------------------


def xor_dataset() -> DenseDesignMatrix:
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float64)
    y = np.array([[0], [1], [1], [0]], dtype=np.float64)
    return DenseDesignMatrix(X, y, name="xor")


def two_gaussians(num_examples=400, dim=2, separation=3.0, seed=None):
    """Two isotropic unit Gaussians whose means are ``separation`` apart,
    with one-hot labels and balanced classes."""
    rng = make_rng(seed)
    labels = np.arange(num_examples) % 2
    rng.shuffle(labels)
    direction = np.ones(dim) / np.sqrt(dim)
    centers = np.where(labels[:, None] == 1, 0.5, -0.5) * separation
    X = rng.standard_normal((num_examples, dim)) + centers * direction
    return DenseDesignMatrix(X, one_hot(labels, 2), name="two_gaussians")


def binary_prototypes(num_examples=200, dim=4, num_prototypes=2,
                      flip_prob=0.1, seed=None):
    """Binary vectors made by flipping bits of a few random prototypes."""
    rng = make_rng(seed)
    protos = rng.integers(0, 2, size=(num_prototypes, dim))
    which = rng.integers(0, num_prototypes, size=num_examples)
    flips = rng.random((num_examples, dim)) < flip_prob
    X = np.abs(protos[which] - flips).astype(np.float64)
    return DenseDesignMatrix(X, name="binary_prototypes")
