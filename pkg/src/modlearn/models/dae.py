"""Denoising autoencoder with tied weights and masking corruption."""

from __future__ import annotations

import numpy as np

from .. import graph as G
from ..graph import Node
from ..rng import make_rng
from ..spaces import VectorSpace
from .base import Model, uniform_init

__all__ = ["DenoisingAutoencoder"]


class DenoisingAutoencoder(Model):
    """
    ``hidden = sigmoid((x * mask) W + b_hid)``,
    ``reconstruction = sigmoid(hidden W^T + b_vis)``.

    ``corruption_level`` is the probability that an input is zeroed.
    """

    kind = "dae"

    def __init__(self, nvis: int, nhid: int, corruption_level: float = 0.3,
                 irange: float | None = None, seed: int | None = None,
                 nonnegative=()):
        super().__init__(nonnegative)
        if not 0.0 <= corruption_level < 1.0:
            raise ValueError("corruption_level must be in [0, 1)")
        self.nvis, self.nhid = int(nvis), int(nhid)
        self.corruption_level = float(corruption_level)
        self.irange = irange
        self.seed = seed
        rng = make_rng(seed)
        self.W = uniform_init(rng, (self.nvis, self.nhid), self.nvis, irange)
        self.b_hid = np.zeros(self.nhid)
        self.b_vis = np.zeros(self.nvis)
        self.input_space = VectorSpace(self.nvis)

    def get_params(self):
        return {"W": self.W, "b_hid": self.b_hid, "b_vis": self.b_vis}

    def _set_param(self, name, value):
        setattr(self, name, value)

    def get_weight_names(self):
        return ["W"]

    def forward(self, x: Node, mask: Node | None = None):
        """Return ``(hidden, reconstruction)`` nodes. ``mask=None`` means no
        corruption."""
        p = self.param_nodes(x.graph)
        inp = x if mask is None else x * mask
        pre_h = inp @ p["W"]
        hidden = G.sigmoid(pre_h + G.broadcast_row(p["b_hid"], pre_h))
        pre_v = hidden @ p["W"].T
        recon = G.sigmoid(pre_v + G.broadcast_row(p["b_vis"], pre_v))
        return hidden, recon

    def sample_mask(self, shape, rng):
        keep = 1.0 - self.corruption_level
        return (make_rng(rng).random(shape) < keep).astype(np.float64)

    def get_config(self):
        return {"nvis": self.nvis, "nhid": self.nhid,
                "corruption_level": self.corruption_level,
                "irange": self.irange, "seed": self.seed,
                "nonnegative": list(self.nonnegative)}


def dae_forward(dae: DenoisingAutoencoder, x: Node, mask: Node):
    return dae.forward(x, mask)
