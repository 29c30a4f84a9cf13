"""Block compressed sensing with non-local reconstruction on a numpy autograd core."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, ModelConfig, TrainConfig
from .estimator import CSReconstructor
from .losses import total_loss
from .metrics import psnr, ssim
from .model import NLCSNet
from .sampling import SamplingOperator, measurement_count, sample_image
from .training import train

__all__ = [
    "CSReconstructor",
    "Checkpoint",
    "ConfigError",
    "ModelConfig",
    "NLCSNet",
    "SamplingOperator",
    "TrainConfig",
    "load_checkpoint",
    "measurement_count",
    "psnr",
    "sample_image",
    "save_checkpoint",
    "ssim",
    "total_loss",
    "train",
]
