"""Numerical core: autodiff tensors, GRU/dense layers, Adam, training loop."""

from . import tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    ACTIVATIONS,
    GruWeights,
    dense,
    dense_graph,
    dropout,
    dropout_graph,
    glorot,
    gru_cell,
    gru_cell_graph,
)
from .optim import AdamState, adam_step
from .tensor import NumericError, Tensor
from .train import FitHistory, TrainConfig, fit

__all__ = [
    "ACTIVATIONS",
    "AdamState",
    "FitHistory",
    "GruWeights",
    "NumericError",
    "Tensor",
    "TrainConfig",
    "adam_step",
    "dense",
    "dense_graph",
    "dropout",
    "dropout_graph",
    "fit",
    "glorot",
    "gru_cell",
    "gru_cell_graph",
    "load_checkpoint",
    "save_checkpoint",
    "tensor",
]
