"""
Binary restricted Boltzmann machine.

Energy: ``E(v, h) = -v.b_vis - h.b_hid - v W h`` with ``W`` shaped
``[nvis, nhid]``. Gaussian visible units are not implemented; a subclass
would override :meth:`mean_v` and :meth:`free_energy`.
"""

from __future__ import annotations

import numpy as np

from .. import graph as G
from ..graph import Node, _sigmoid
from ..rng import make_rng
from ..spaces import VectorSpace
from .base import Model, uniform_init

__all__ = ["RBM"]


class RBM(Model):
    """
    Parameters
    ----------
    nvis, nhid : int
    irange : float, optional
        Initial weights uniform in ``±irange`` (default ``1/sqrt(nvis)``).
    seed : int, optional
        Seeds initialization and the sampling done by :meth:`train_batch`.
    learning_rate : float
        Step size of the built-in CD-1 rule used by :meth:`train_batch`.
    max_epochs : int
        Passes made by :meth:`train_all`.
    batch_size : int
        Minibatch size used by :meth:`train_all`.
    """

    kind = "rbm"

    def __init__(self, nvis: int, nhid: int, irange: float | None = None,
                 seed: int | None = None, learning_rate: float = 0.05,
                 max_epochs: int = 10, batch_size: int = 10, nonnegative=()):
        super().__init__(nonnegative)
        if int(nvis) < 1 or int(nhid) < 1:
            raise ValueError("nvis and nhid must be >= 1")
        self.nvis, self.nhid = int(nvis), int(nhid)
        self.irange = irange
        self.seed = seed
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.rng = make_rng(seed)
        self.W = uniform_init(self.rng, (self.nvis, self.nhid), self.nvis,
                              irange)
        self.b_vis = np.zeros(self.nvis)
        self.b_hid = np.zeros(self.nhid)
        self.input_space = VectorSpace(self.nvis)

    def get_params(self):
        return {"W": self.W, "b_vis": self.b_vis, "b_hid": self.b_hid}

    def _set_param(self, name, value):
        setattr(self, name, value)

    def get_weight_names(self):
        return ["W"]

    # symbolic -----------------------------------------------------------------

    def free_energy(self, v: Node) -> Node:
        """``F(v) = -v.b_vis - sum_j softplus(b_hid_j + (v W)_j)`` per row."""
        p = self.param_nodes(v.graph)
        visible = G.sum(v * G.broadcast_row(p["b_vis"], v), axis=1)
        pre = v @ p["W"]
        pre = pre + G.broadcast_row(p["b_hid"], pre)
        return -visible - G.sum(G.softplus(pre), axis=1)

    def reconstruction(self, v: Node) -> Node:
        p = self.param_nodes(v.graph)
        pre_h = v @ p["W"]
        h = G.sigmoid(pre_h + G.broadcast_row(p["b_hid"], pre_h))
        pre_v = h @ p["W"].T
        return G.sigmoid(pre_v + G.broadcast_row(p["b_vis"], pre_v))

    def get_monitoring_channels(self, data):
        X = data["X"]
        err = G.mean(G.sum(G.square(X - self.reconstruction(X)), axis=1))
        return {"reconstruction_error": err}

    # numeric ----------------------------------------------------------------

    def energy(self, v, h):
        v, h = np.atleast_2d(v), np.atleast_2d(h)
        return -(v @ self.b_vis) - (h @ self.b_hid) - np.sum(
            (v @ self.W) * h, axis=1)

    def mean_h(self, v):
        return _sigmoid(v @ self.W + self.b_hid)

    def mean_v(self, h):
        return _sigmoid(h @ self.W.T + self.b_vis)

    def sample_h(self, v, rng):
        p = self.mean_h(v)
        return (rng.random(p.shape) < p).astype(np.float64), p

    def sample_v(self, h, rng):
        p = self.mean_v(h)
        return (rng.random(p.shape) < p).astype(np.float64), p

    def gibbs_step(self, v, rng=None):
        """One block Gibbs sweep ``v -> h -> v'``; returns ``(v', h)``."""
        rng = make_rng(rng)
        h, _ = self.sample_h(np.asarray(v, dtype=np.float64), rng)
        v_new, _ = self.sample_v(h, rng)
        return v_new, h

    def sufficient_statistics(self, v):
        """Mean of ``v h^T``, ``v`` and ``h`` with ``h`` at its conditional
        mean given ``v``."""
        h = self.mean_h(v)
        n = v.shape[0]
        return {"W": v.T @ h / n, "b_vis": v.mean(axis=0),
                "b_hid": h.mean(axis=0)}

    def train_batch(self, X, y=None):
        """One CD-1 step on the negative log-likelihood."""
        X = np.asarray(X, dtype=np.float64)
        v_neg, _ = self.gibbs_step(X, self.rng)
        pos = self.sufficient_statistics(X)
        neg = self.sufficient_statistics(v_neg)
        updates = {name: self.get_params()[name]
                   + self.learning_rate * (pos[name] - neg[name])
                   for name in pos}
        self.set_params(self.censor_updates(updates))

    def train_all(self, dataset):
        for _ in range(int(self.max_epochs)):
            for X, _ in dataset.iterator("shuffled_sequential",
                                         self.batch_size, rng=self.rng):
                self.train_batch(X)

    def get_config(self):
        return {"nvis": self.nvis, "nhid": self.nhid, "irange": self.irange,
                "seed": self.seed, "learning_rate": self.learning_rate,
                "max_epochs": self.max_epochs, "batch_size": self.batch_size,
                "nonnegative": list(self.nonnegative)}
