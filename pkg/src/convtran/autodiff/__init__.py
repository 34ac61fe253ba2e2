from . import functional
from .nn import BatchNorm, Conv1d, LayerNorm, Linear, Module, Parameter, count_parameters
from .optim import Adam, EarlyStopper, early_stop_update
from .tensor import Tensor, is_grad_enabled, matmul, no_grad, tensor

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv1d",
    "EarlyStopper",
    "LayerNorm",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "count_parameters",
    "early_stop_update",
    "functional",
    "is_grad_enabled",
    "matmul",
    "no_grad",
    "tensor",
]
