"""From-scratch convolutional classifier: layers, Adam, training, checkpoints."""

from .checkpoint import load as load_checkpoint
from .checkpoint import save as save_checkpoint
from .network import ARCHITECTURES, LayerSpec, Network, NetworkSpec, architecture, images_to_tensor, loss_and_grads, predict
from .optim import AdamState, OptimizerConfig, adam_step
from .train import DataSplit, EpochRecord, evaluate, fit, write_log_csv

__all__ = [
    "ARCHITECTURES",
    "AdamState",
    "DataSplit",
    "EpochRecord",
    "LayerSpec",
    "Network",
    "NetworkSpec",
    "OptimizerConfig",
    "adam_step",
    "architecture",
    "evaluate",
    "fit",
    "images_to_tensor",
    "load_checkpoint",
    "loss_and_grads",
    "predict",
    "save_checkpoint",
    "write_log_csv",
]
