"""Network container, Adam optimizer with inverse-time decay, accuracy.

The effective learning rate is lr / (1 + decay * completed_epochs); Adam
uses beta1 0.9, beta2 0.999, eps 1e-8. Training is single-threaded over
the network's parameters; forward evaluation of an immutable network is
safe from many threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergedError, ShapeError
from . import losses


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 256
    decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.decay < 0:
            raise ValueError("decay must be non-negative")

    @classmethod
    def with_inverse_time_decay(cls, learning_rate: float, epochs: int, **kw) -> "TrainingConfig":
        """Decay fixed to learning_rate / epochs."""
        return cls(learning_rate=learning_rate, epochs=epochs,
                   decay=learning_rate / epochs, **kw)


class Network:
    """Ordered layer stack with a scalar batch loss at the end."""

    def __init__(self, layers: list):
        self.layers = list(layers)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameter_items(self):
        """Yields (layer_index, name, array) for every trainable parameter."""
        for li, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield li, name, arr

    def parameter_count(self) -> int:
        return sum(arr.size for _, _, arr in self.parameter_items())


class AdamTrainer:
    """Owns Adam state and the epoch counter for one network."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, network: Network, config: TrainingConfig):
        self.network = network
        self.config = config
        self.completed_epochs = 0
        self._step = 0
        self._m = {}
        self._v = {}
        for li, name, arr in network.parameter_items():
            self._m[(li, name)] = np.zeros_like(arr)
            self._v[(li, name)] = np.zeros_like(arr)

    @property
    def effective_lr(self) -> float:
        return self.config.learning_rate / (1.0 + self.config.decay * self.completed_epochs)

    def step(self, batch_x: np.ndarray, batch_y: np.ndarray, loss_kind: str,
             epoch: int | None = None, batch: int | None = None) -> float:
        """One forward/backward/update pass; returns the batch loss."""
        net = self.network
        out = net.forward(batch_x, train=True)
        if out.shape != batch_y.shape:
            raise ShapeError(f"network output {out.shape} vs targets {batch_y.shape}")
        loss = losses.batch_loss(loss_kind, out, batch_y)
        if not np.isfinite(loss):
            raise DivergedError(f"non-finite loss {loss}", epoch=epoch, batch=batch)
        net.backward(losses.batch_loss_grad(loss_kind, out, batch_y))

        self._step += 1
        lr = self.effective_lr
        bc1 = 1.0 - self.BETA1 ** self._step
        bc2 = 1.0 - self.BETA2 ** self._step
        for li, name, arr in net.parameter_items():
            g = net.layers[li].grads[name]
            if not np.all(np.isfinite(g)):
                raise DivergedError(f"non-finite gradient in layer {li} param {name!r}",
                                    epoch=epoch, batch=batch)
            key = (li, name)
            m = self._m[key]
            v = self._v[key]
            m *= self.BETA1
            m += (1.0 - self.BETA1) * g
            v *= self.BETA2
            v += (1.0 - self.BETA2) * g * g
            arr -= (lr * (m / bc1) / (np.sqrt(v / bc2) + self.EPS)).astype(arr.dtype)
        return float(loss)

    def end_epoch(self):
        self.completed_epochs += 1


def backward_and_step(network: Network, batch_x, batch_y, config: TrainingConfig,
                      loss_kind: str, trainer: AdamTrainer | None = None):
    """One optimizer step over a batch; returns (trainer, batch_loss).

    Pass the returned trainer back in to keep Adam moments and the epoch
    counter across calls.
    """
    if trainer is None:
        trainer = AdamTrainer(network, config)
    loss = trainer.step(np.asarray(batch_x), np.asarray(batch_y), loss_kind)
    return trainer, loss


def evaluate_accuracy(network: Network, features: np.ndarray, labels: np.ndarray,
                      threshold: float = 0.5) -> float:
    """(TP + TN) / all samples for a 1-unit sigmoid head.

    Predicts attack when the output is >= threshold.
    """
    if len(features) == 0:
        raise ValueError("cannot evaluate accuracy on zero samples")
    out = network.forward(np.asarray(features))
    if out.ndim != 2 or out.shape[1] != 1:
        raise ShapeError(f"expected a single-unit head, got output shape {out.shape}")
    predicted = (out[:, 0] >= threshold).astype(np.uint8)
    return float(np.mean(predicted == np.asarray(labels, dtype=np.uint8)))
