"""Numpy convolutional classifier: layers, network, optimizer and training loop."""

from .layers import BatchNorm, Conv1D, Dense, Flatten, GaussianNoise, MaxPool1D, SpatialDropout1D, gelu
from .model import (
    FAST_ARCH,
    PAPER_ARCH,
    ArchSpec,
    Network,
    NumericFailure,
    build_fast_architecture,
    build_paper_architecture,
    cross_entropy,
)
from .optim import AdamState, TrainConfig, adam_step
from .train import NO_PREDICTION, TrainingAborted, accuracy, predict_key, train

__all__ = [
    "BatchNorm", "Conv1D", "Dense", "Flatten", "GaussianNoise", "MaxPool1D", "SpatialDropout1D", "gelu",
    "FAST_ARCH", "PAPER_ARCH", "ArchSpec", "Network", "NumericFailure",
    "build_fast_architecture", "build_paper_architecture", "cross_entropy",
    "AdamState", "TrainConfig", "adam_step",
    "NO_PREDICTION", "TrainingAborted", "accuracy", "predict_key", "train",
]
