"""
Dataset preprocessors.

Each preprocessor is fitted on the first dataset it sees with
``can_fit=True`` and then reuses that state, so test data is transformed
with statistics gathered on training data.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Preprocessor", "Pipeline", "Standardize",
           "GlobalContrastNormalize", "PCA", "ZCA", "fit_apply",
           "PreprocessingError"]


class PreprocessingError(ValueError):
    pass


class Preprocessor:
    """Base class. Subclasses implement :meth:`fit` and :meth:`transform`."""

    fitted = False

    def fit(self, X: np.ndarray) -> None:
        raise NotImplementedError

    def transform(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, dataset, can_fit: bool = False):
        if can_fit:
            self.fit(dataset.X)
            self.fitted = True
        elif not self.fitted:
            raise PreprocessingError(
                f"{type(self).__name__} has not been fitted; apply it with "
                f"can_fit=True on the training set first")
        dataset.set_design_matrix(self.transform(dataset.X))
        return dataset

    def get_state(self) -> dict:
        return {}

    def set_state(self, state: dict) -> None:
        for key, value in state.items():
            setattr(self, key, None if value is None else np.asarray(value))
        self.fitted = True


def fit_apply(preprocessor: Preprocessor, dataset, can_fit: bool):
    return preprocessor.apply(dataset, can_fit=can_fit)


class Pipeline(Preprocessor):
    """Apply several preprocessors in order."""

    def __init__(self, items):
        self.items = list(items)

    def apply(self, dataset, can_fit=False):
        for item in self.items:
            item.apply(dataset, can_fit)
        return dataset


class Standardize(Preprocessor):
    """Per-column zero mean and unit variance.

    Columns whose standard deviation is below ``std_eps`` are only centered.
    """

    def __init__(self, std_eps: float = 1e-4):
        self.std_eps = std_eps
        self.mean = None
        self.std = None

    def fit(self, X):
        self.mean = X.mean(axis=0)
        self.std = X.std(axis=0)

    def transform(self, X):
        scale = np.where(self.std < self.std_eps, 1.0, self.std)
        return (X - self.mean) / scale

    def get_state(self):
        return {"mean": self.mean, "std": self.std}


class GlobalContrastNormalize(Preprocessor):
    """Per-row centering followed by rescaling each row to norm ``scale``.

    Rows whose (centered) norm is below ``eps`` are left unscaled. There is
    no fitted state.
    """

    fitted = True

    def __init__(self, scale: float = 1.0, subtract_mean: bool = True,
                 eps: float = 1e-8):
        self.scale = scale
        self.subtract_mean = subtract_mean
        self.eps = eps

    def fit(self, X):
        pass

    def transform(self, X):
        if self.subtract_mean:
            X = X - X.mean(axis=1, keepdims=True)
        norms = np.sqrt(np.sum(X * X, axis=1, keepdims=True))
        norms = np.where(norms < self.eps, 1.0, norms / self.scale)
        return X / norms


def _sym_eig(C):
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""
    vals, vecs = np.linalg.eigh(C)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def _covariance(X, mean):
    Xc = X - mean
    return Xc.T @ Xc / X.shape[0]


class PCA(Preprocessor):
    """Project centered data onto its top ``num_components`` principal axes.

    Covariances use the ``1/n`` normalization.
    """

    def __init__(self, num_components: int):
        if int(num_components) < 1:
            raise PreprocessingError("num_components must be >= 1")
        self.num_components = int(num_components)
        self.mean = None
        self.components = None
        self.variances = None

    def fit(self, X):
        if self.num_components > X.shape[1]:
            raise PreprocessingError(
                f"num_components {self.num_components} exceeds data "
                f"dimension {X.shape[1]}")
        self.mean = X.mean(axis=0)
        vals, vecs = _sym_eig(_covariance(X, self.mean))
        self.components = vecs[:, :self.num_components]
        self.variances = vals[:self.num_components]

    def transform(self, X):
        return (X - self.mean) @ self.components

    def inverse(self, Z):
        return Z @ self.components.T + self.mean

    def get_state(self):
        return {"mean": self.mean, "components": self.components,
                "variances": self.variances}


class ZCA(Preprocessor):
    """Whitening by ``(C + eps I)^(-1/2)``, which keeps the data dimension.

    ``C`` is the ``1/n`` covariance of the fitting set, so with a small
    ``eps`` the transformed fitting set has near-identity covariance.
    """

    def __init__(self, eps: float = 1e-8):
        self.eps = eps
        self.mean = None
        self.whitener = None

    def fit(self, X):
        self.mean = X.mean(axis=0)
        vals, vecs = _sym_eig(_covariance(X, self.mean))
        vals = np.maximum(vals, 0.0)
        self.whitener = (vecs / np.sqrt(vals + self.eps)) @ vecs.T

    def transform(self, X):
        return (X - self.mean) @ self.whitener

    def get_state(self):
        return {"mean": self.mean, "whitener": self.whitener}
