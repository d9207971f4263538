"""Small deterministic neural-network engine built on numpy."""

from .layers import (
    DEFAULT_DTYPE,
    Conv2d,
    Deconv2d,
    Dense,
    Identity,
    Module,
    Reshape,
    Sequential,
    mlp,
)
from .losses import mse_loss, per_sample_mse
from .optim import Adam, AdamState, adam_step
from .rng import child_seed, stream
from .tensor import (
    DimensionError,
    GraphError,
    NonFiniteError,
    Tensor,
    backward,
    concat,
    no_grad,
    take,
)
from .train import Schedule, TrainHistory, train

__all__ = [
    "DEFAULT_DTYPE", "Conv2d", "Deconv2d", "Dense", "Identity", "Module", "Reshape",
    "Sequential", "mlp", "mse_loss", "per_sample_mse", "Adam", "AdamState", "adam_step",
    "child_seed", "stream", "DimensionError", "GraphError", "NonFiniteError", "Tensor",
    "backward", "concat", "no_grad", "take", "Schedule", "TrainHistory", "train",
]
