"""Small reverse-mode autodiff engine plus the MLP and optimiser code built
on it."""

from .autodiff import (
    AutodiffError,
    ShapeError,
    Tensor,
    affine,
    add,
    cmul,
    concat,
    ccontract,
    div,
    mul,
    relu,
    reshape,
    scale,
    sqrt,
    sub,
    sum_of_squares,
    sum_axes,
    tanh,
    mean,
    take,
)
from .mlp import Mlp, MlpSpec, mlp_forward
from .optim import AdamState, PlateauState, TrainingAborted, adam_step, lr_schedule_step
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "AdamState", "AutodiffError", "CheckpointError", "Mlp", "MlpSpec", "PlateauState", "ShapeError",
    "Tensor", "TrainingAborted", "adam_step", "add", "affine", "ccontract", "cmul", "concat", "div",
    "load_checkpoint", "lr_schedule_step", "mean", "mlp_forward", "mul", "relu", "reshape",
    "save_checkpoint", "scale", "sqrt", "sub", "sum_axes", "sum_of_squares", "take", "tanh",
]
