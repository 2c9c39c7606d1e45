from .base import CapabilityError, Model, supports
from .dae import DenoisingAutoencoder, dae_forward
from .mlp import (MLP, ConvLayer, Layer, Linear, RectifiedLinear, Sigmoid,
                  Softmax, Tanh)
from .rbm import RBM

MODEL_KINDS = {"mlp": MLP, "rbm": RBM, "dae": DenoisingAutoencoder}

__all__ = ["Model", "CapabilityError", "supports", "MLP", "Layer", "Linear",
           "Sigmoid", "Tanh", "RectifiedLinear", "Softmax", "ConvLayer",
           "RBM", "DenoisingAutoencoder", "dae_forward", "MODEL_KINDS"]
