"""Hand-derived CNN layers, the view classifier and its SGD trainer.

Checkpoint I/O lives in spnet.nn.checkpoint, which also serializes the
multiview heads and is therefore imported explicitly.
"""

from .layers import softmax, softmax_cross_entropy
from .model import SpnetModel
from .training import accuracy, binary_accuracy, classification_metrics, sgd_step, train_model

__all__ = [
    "SpnetModel",
    "accuracy",
    "binary_accuracy",
    "classification_metrics",
    "sgd_step",
    "softmax",
    "softmax_cross_entropy",
    "train_model",
]
