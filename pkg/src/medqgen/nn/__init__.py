"""Minimal float64 autograd kernel and the layers built on it."""

from .autograd import Tensor, no_grad
from .layers import Affine, BiGRULastState, BiLSTMEncoder, GRUCell, LSTMCell, MLP, ParamSet
from .optim import Adam

__all__ = [
    "Adam",
    "Affine",
    "BiGRULastState",
    "BiLSTMEncoder",
    "GRUCell",
    "LSTMCell",
    "MLP",
    "ParamSet",
    "Tensor",
    "no_grad",
]
