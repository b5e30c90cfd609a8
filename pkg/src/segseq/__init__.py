"""Shared multi-sequence time-series segmentation with a pool of GP kernels."""

from .model import (
    Hyperparams,
    InvalidArgument,
    KernelParams,
    ModelState,
    Segmentation,
    Sequence,
    length_log_prior,
    segmentation_log_prior,
    validate_dataset,
)
from .trainer import fit, segment

__version__ = "0.1.0"
