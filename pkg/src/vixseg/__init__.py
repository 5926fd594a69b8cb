"""vixseg: U-shaped segmentation with an xLSTM matrix-memory bottleneck.

A desk-scale, numpy-backed library: dense tensors with a reverse-mode
gradient tape, a convolutional encoder/decoder around a bidirectional
mLSTM token mixer, Dice/CCE training losses, DSC/IoU/HD95 evaluation
metrics, a deterministic synthetic dataset, and a CLI for training,
evaluation, gradient checking and complexity benchmarking.
"""

from .config import RunConfig, parse_run_config
from .losses import cce_loss, composite_loss, dice_loss, one_hot
from .metrics import MetricReport, dsc_iou, evaluate_case, hd95
from .optim import AdamW
from .tensor import (
    Parameter,
    Tape,
    Tensor,
    no_grad,
    precision,
    set_default_dtype,
)
from .unet import ModelConfig, VilUNet, architecture_summary

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "no_grad",
    "precision",
    "set_default_dtype",
    "AdamW",
    "ModelConfig",
    "VilUNet",
    "architecture_summary",
    "RunConfig",
    "parse_run_config",
    "dice_loss",
    "cce_loss",
    "composite_loss",
    "one_hot",
    "dsc_iou",
    "hd95",
    "evaluate_case",
    "MetricReport",
    "__version__",
]
