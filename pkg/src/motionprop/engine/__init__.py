from .checkpoint import load_checkpoint, pack_tensors, save_checkpoint, unpack_tensors
from .layers import (
    BatchNorm2d,
    Conv2d,
    ConvBNReLU,
    MaxPool2d,
    ReLU,
    UpsampleBilinear,
    softmax_ce_map,
)
from .optim import OptimizerConfig, Parameter, learning_rate, sgd_step, zero_grads

__all__ = [
    "BatchNorm2d",
    "Conv2d",
    "ConvBNReLU",
    "MaxPool2d",
    "OptimizerConfig",
    "Parameter",
    "ReLU",
    "UpsampleBilinear",
    "learning_rate",
    "load_checkpoint",
    "pack_tensors",
    "save_checkpoint",
    "sgd_step",
    "softmax_ce_map",
    "unpack_tensors",
    "zero_grads",
]
