"""Minimal neural-network engine backing the encoder and decoder."""

from .activations import ACTIVATION_KINDS, sigmoid
from .layers import DenseLayer, ExpandToSequence, LstmLayer, dense_forward, lstm_forward
from .losses import BCE_EPS, LOSS_KINDS, batch_loss, batch_loss_grad, loss_value
from .network import AdamTrainer, Network, TrainingConfig, backward_and_step, evaluate_accuracy
from .serialize import load_network, network_from_dict, network_to_dict, save_network

__all__ = [
    "ACTIVATION_KINDS",
    "AdamTrainer",
    "BCE_EPS",
    "DenseLayer",
    "ExpandToSequence",
    "LOSS_KINDS",
    "LstmLayer",
    "Network",
    "TrainingConfig",
    "backward_and_step",
    "batch_loss",
    "batch_loss_grad",
    "dense_forward",
    "evaluate_accuracy",
    "load_network",
    "loss_value",
    "lstm_forward",
    "network_from_dict",
    "network_to_dict",
    "save_network",
    "sigmoid",
]
