from nn.checkpoint import load_checkpoint, save_checkpoint
from nn.network import (
    ForwardCache,
    ParamStore,
    backward,
    backward_with_input,
    cross_entropy,
    cross_entropy_grad,
    forward,
    grad_check,
    init_params,
)
from nn.optim import AdamState, optimizer_step

__all__ = [
    "AdamState",
    "ForwardCache",
    "ParamStore",
    "backward",
    "backward_with_input",
    "cross_entropy",
    "cross_entropy_grad",
    "forward",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "optimizer_step",
    "save_checkpoint",
]
