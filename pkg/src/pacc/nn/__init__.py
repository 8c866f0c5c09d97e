"""Numpy tensor engine, layer primitives, initializers and Adam."""
from .functional import (
    AllMasked,
    BatchNormState,
    BatchTooSmall,
    EvenKernel,
    IndexOutOfVocab,
    batchnorm,
    bigru,
    conv1d,
    dense,
    dropout,
    embedding,
    gru_direction,
    mse_loss,
    softmax,
)
from .gradcheck import GradCheckReport, grad_check, relative_error
from .optim import AdamState, LearningRateSchedule, NonFiniteGradient, adam_step
from .rng import RngStream
from .tensor import ACTIVATIONS, ShapeMismatch, Tensor, concat, max_over, relu, sigmoid, stack, tanh

__all__ = [
    "ACTIVATIONS", "AdamState", "AllMasked", "BatchNormState", "BatchTooSmall", "EvenKernel",
    "GradCheckReport", "IndexOutOfVocab", "LearningRateSchedule", "NonFiniteGradient", "RngStream",
    "ShapeMismatch", "Tensor", "adam_step", "batchnorm", "bigru", "concat", "conv1d", "dense",
    "dropout", "embedding", "grad_check", "gru_direction", "max_over", "mse_loss", "relative_error",
    "relu", "sigmoid", "softmax", "stack", "tanh",
]
