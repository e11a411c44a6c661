"""Small numpy neural-network core: conv1d stacks, softmax heads, Adam, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .kernels import BACKEND
from .network import (
    EXTRACTOR,
    HEAD,
    ArchSpec,
    ParamTree,
    backward,
    conv_ref,
    describe,
    embed,
    forward,
    head_forward,
    init_params,
    loss_and_grad,
    predict,
    predict_proba,
)
from .optim import OptimizerState, adam_step, freeze_mask

__all__ = [
    "BACKEND",
    "EXTRACTOR",
    "HEAD",
    "ArchSpec",
    "OptimizerState",
    "ParamTree",
    "adam_step",
    "backward",
    "conv_ref",
    "describe",
    "embed",
    "forward",
    "freeze_mask",
    "head_forward",
    "init_params",
    "load_checkpoint",
    "loss_and_grad",
    "predict",
    "predict_proba",
    "save_checkpoint",
]
