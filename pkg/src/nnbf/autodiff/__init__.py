"""A small reverse-mode autodiff engine with the layers NNBF needs."""

from .tensor import ContractError, Tensor, as_tensor, concat, conv1d, gelu, no_grad
from .layers import BatchNorm1d, Conv1d, GELU, Linear, Module
from .optim import AdamW, AdamWState, adamw_step
from .gradcheck import GradCheckReport, finite_difference_check, relative_error
from .checkpoint import (
    CheckpointFormatError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "AdamW", "AdamWState", "BatchNorm1d", "CheckpointFormatError", "ContractError",
    "Conv1d", "GELU", "GradCheckReport", "Linear", "Module", "Tensor", "adamw_step",
    "as_tensor", "concat", "conv1d", "decode_checkpoint", "encode_checkpoint",
    "finite_difference_check", "gelu", "load_checkpoint", "no_grad",
    "relative_error", "save_checkpoint",
]
