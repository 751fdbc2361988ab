from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .optim import Adam, softmax_cross_entropy
from .train import TrainConfig, TrainResult, condition_inputs, train
from .vgg import DESK_WIDTHS, PAPER_WIDTHS, VggConfig, VggNet, count_parameters, softmax

__all__ = [
    "Adam", "Checkpoint", "DESK_WIDTHS", "PAPER_WIDTHS", "TrainConfig", "TrainResult", "VggConfig",
    "VggNet", "condition_inputs", "count_parameters", "load_checkpoint", "save_checkpoint",
    "softmax", "softmax_cross_entropy", "train",
]
