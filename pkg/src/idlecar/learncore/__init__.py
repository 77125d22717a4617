"""Small numpy training core: layers, backprop, optimizers and an SMO SVM."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import lstm_step, softmax, softmax_cross_entropy
from .model import (
    LayerSpec,
    ModelSpec,
    backward,
    conv1d,
    conv2d,
    dense,
    dropout,
    forward,
    init_params,
    loss_and_grads,
    lstm,
    maxpool,
    predict_proba,
    softmax as softmax_layer,
    xavier_init,
)
from .optim import OptimizerConfig, adam_step, init_state, nesterov_momentum_step, staircase_lr
from .svm import SvmConfig, SvmModel, decision_function, kkt_violation, svm_predict_proba, svm_train
from .train import FitResult, accuracy, fit

__all__ = [
    "LayerSpec",
    "ModelSpec",
    "OptimizerConfig",
    "SvmConfig",
    "SvmModel",
    "FitResult",
    "conv1d",
    "conv2d",
    "maxpool",
    "dense",
    "dropout",
    "lstm",
    "softmax_layer",
    "forward",
    "backward",
    "loss_and_grads",
    "predict_proba",
    "init_params",
    "xavier_init",
    "lstm_step",
    "softmax",
    "softmax_cross_entropy",
    "adam_step",
    "nesterov_momentum_step",
    "staircase_lr",
    "init_state",
    "fit",
    "accuracy",
    "svm_train",
    "svm_predict_proba",
    "decision_function",
    "kkt_violation",
    "save_checkpoint",
    "load_checkpoint",
]
