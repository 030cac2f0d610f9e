"""Multi-view sequential learning with per-view LSTMs fused through an
attention-gated memory, built on a from-scratch reverse-mode tape."""

__version__ = "0.1.0"

from .model import ModelConfig, TaskSpec, ViewSpec, forward, init_params, param_count, predict
from .training import TrainConfig, grad_check, train

__all__ = [
    "ModelConfig", "TaskSpec", "ViewSpec",
    "forward", "init_params", "param_count", "predict",
    "TrainConfig", "grad_check", "train",
    "__version__",
]
