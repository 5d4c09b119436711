"""Toy context-enhanced U-Net in plain numpy."""

from .checkpoint import load_checkpoint, save_checkpoint
from .infer import infer_volume, stack_indices, standardize_stack
from .net import CEUNet, DMPSpec, UNetSpec
from .params import AdamConfig, ParamStore, adam_step
from .train import TrainConfig, TrainingSet, train

__all__ = [
    "AdamConfig", "CEUNet", "DMPSpec", "ParamStore", "TrainConfig", "TrainingSet", "UNetSpec",
    "adam_step", "infer_volume", "load_checkpoint", "save_checkpoint", "stack_indices",
    "standardize_stack", "train",
]
