from .layers import Activation, BatchNorm, Conv2d, Dense, Flatten, Layer, MaxPool2d
from .network import (
    ARCHITECTURES,
    NetSpec,
    Network,
    architecture,
    cross_entropy,
    forward,
    glorot_init,
    loss_and_grads,
    softmax,
)
from .stats import estimate_activation_probs, hessian_diagonal
from .train import AdamState, TrainConfig, accuracy, adam_step, evaluate, predict_logits, retrain, train

__all__ = [
    "ARCHITECTURES", "Activation", "AdamState", "BatchNorm", "Conv2d", "Dense", "Flatten",
    "Layer", "MaxPool2d", "NetSpec", "Network", "TrainConfig", "accuracy", "adam_step",
    "architecture", "cross_entropy", "estimate_activation_probs", "evaluate", "forward",
    "glorot_init", "hessian_diagonal", "loss_and_grads", "predict_logits", "retrain",
    "softmax", "train",
]
