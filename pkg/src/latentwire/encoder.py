"""Supervised encoder: latent dense layer first, LSTM stack, MLP, sigmoid head.

The first hidden layer IS the latent space. After training, its weights,
bias and activation are exported as a CompressionMap; a probe then
compresses a record with a single matrix-vector multiply plus bias and
activation, nothing else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import MapLoadError, ShapeError
from .nn.activations import ACTIVATION_KINDS, apply as apply_activation
from .nn.layers import DenseLayer, ExpandToSequence, LstmLayer
from .nn.network import AdamTrainer, Network, TrainingConfig, evaluate_accuracy
from .nn import losses
from .pipeline import FeatureSet, PreprocessModel

MAP_FORMAT_VERSION = 1
ENCODER_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture and training parameters for one encoder build."""

    input_dim: int
    latent_size: int
    lstm_units: tuple[int, int]
    mlp_layers: tuple[int, ...]
    activation: str
    training: TrainingConfig
    latent_activation: str = "sigmoid"

    def __post_init__(self):
        if not (0 < self.latent_size < self.input_dim):
            raise ValueError(f"latent_size must lie in (0, input_dim); got {self.latent_size} vs {self.input_dim}")
        if not self.mlp_layers:
            raise ValueError("mlp_layers must be non-empty")
        if any(u <= 0 for u in self.lstm_units) or len(self.lstm_units) != 2:
            raise ValueError("lstm_units must be two positive counts")
        for act in (self.activation, self.latent_activation):
            if act not in ACTIVATION_KINDS:
                raise ValueError(f"unknown activation {act!r}")


@dataclass
class EpochStats:
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainedEncoder:
    spec: EncoderSpec | None
    network: Network
    history: list[EpochStats] = field(default_factory=list)

    def latent_activation_of(self, x: np.ndarray) -> np.ndarray:
        """First-hidden-layer activation for one record (the latent tap)."""
        return self.network.layers[0].forward_single(np.asarray(x))

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return self.network.forward(np.asarray(features))[:, 0]


def build_encoder(spec: EncoderSpec, dtype=np.float32) -> Network:
    """Construct the untrained network for a spec, seeded from its config.

    Layer order: dense latent, two LSTM layers (the latent vector is fed
    one dimension per timestep), the MLP stack, then a 1-unit sigmoid
    classifier head.
    """
    rng = np.random.default_rng(spec.training.seed)
    layers = [
        DenseLayer.init(spec.latent_size, spec.input_dim, spec.latent_activation, rng, dtype=dtype),
        ExpandToSequence(),
        LstmLayer.init(spec.lstm_units[0], 1, rng, return_sequences=True, dtype=dtype),
        LstmLayer.init(spec.lstm_units[1], spec.lstm_units[0], rng, dtype=dtype),
    ]
    prev = spec.lstm_units[1]
    for width in spec.mlp_layers:
        layers.append(DenseLayer.init(width, prev, spec.activation, rng, dtype=dtype))
        prev = width
    layers.append(DenseLayer.init(1, prev, "sigmoid", rng, dtype=dtype))
    return Network(layers)


def train_encoder(network: Network, train: FeatureSet, validation: FeatureSet,
                  config: TrainingConfig) -> TrainedEncoder:
    """Supervised binary-classification training with BCE.

    Deterministic under a fixed seed: epoch shuffles come from the config
    seed, and batches are visited in shuffle order.
    """
    if config.epochs < 1:
        raise ValueError("no training requested: epochs must be >= 1")
    if len(train) == 0 or len(validation) == 0:
        raise ValueError("train and validation splits must be non-empty")
    first = network.layers[0]
    if train.dimension != first.in_dim:
        raise ShapeError(f"network expects input dim {first.in_dim}, data has {train.dimension}")

    try:
        spec = _spec_of(network, config)
    except (ValueError, IndexError):
        spec = None  # non-standard stack passed in; history still records
    trained = TrainedEncoder(spec=spec, network=network)
    rng = np.random.default_rng(config.seed)
    x_train = train.features
    y_train = train.labels.astype(np.float32).reshape(-1, 1)
    x_val = validation.features
    y_val = validation.labels.astype(np.float32).reshape(-1, 1)
    trainer = AdamTrainer(network, config)

    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        batch_losses = []
        for start in range(0, len(train), config.batch_size):
            rows = order[start:start + config.batch_size]
            loss = trainer.step(x_train[rows], y_train[rows], "binary_cross_entropy",
                                epoch=epoch, batch=start // config.batch_size)
            batch_losses.append(loss)
        trainer.end_epoch()
        trained.history.append(EpochStats(
            train_loss=float(np.mean(batch_losses)),
            train_accuracy=evaluate_accuracy(network, x_train, train.labels),
            val_loss=float(losses.batch_loss("binary_cross_entropy", network.forward(x_val), y_val)),
            val_accuracy=evaluate_accuracy(network, x_val, validation.labels),
        ))
    return trained


def _spec_of(network: Network, config: TrainingConfig) -> EncoderSpec:
    """Recover the architecture description from a built network."""
    latent = network.layers[0]
    lstms = [l for l in network.layers if isinstance(l, LstmLayer)]
    dense_tail = [l for l in network.layers[1:] if isinstance(l, DenseLayer)]
    return EncoderSpec(
        input_dim=latent.in_dim,
        latent_size=latent.out_dim,
        lstm_units=(lstms[0].units, lstms[1].units),
        mlp_layers=tuple(l.out_dim for l in dense_tail[:-1]),
        activation=dense_tail[0].activation if len(dense_tail) > 1 else "sigmoid",
        training=config,
        latent_activation=latent.activation,
    )


def training_to_dict(config: TrainingConfig) -> dict:
    return {
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "decay": config.decay,
        "seed": config.seed,
    }


def training_from_dict(doc: dict) -> TrainingConfig:
    return TrainingConfig(
        learning_rate=float(doc["learning_rate"]),
        epochs=int(doc["epochs"]),
        batch_size=int(doc.get("batch_size", 256)),
        decay=float(doc.get("decay", 0.0)),
        seed=int(doc.get("seed", 0)),
    )


def spec_to_dict(spec: EncoderSpec) -> dict:
    return {
        "input_dim": spec.input_dim,
        "latent_size": spec.latent_size,
        "lstm_units": list(spec.lstm_units),
        "mlp_layers": list(spec.mlp_layers),
        "activation": spec.activation,
        "latent_activation": spec.latent_activation,
        "training": training_to_dict(spec.training),
    }


def spec_from_dict(doc: dict) -> EncoderSpec:
    return EncoderSpec(
        input_dim=int(doc["input_dim"]),
        latent_size=int(doc["latent_size"]),
        lstm_units=tuple(int(u) for u in doc["lstm_units"]),
        mlp_layers=tuple(int(w) for w in doc["mlp_layers"]),
        activation=doc["activation"],
        training=training_from_dict(doc["training"]),
        latent_activation=doc.get("latent_activation", "sigmoid"),
    )


def save_trained_encoder(trained: TrainedEncoder, path) -> None:
    from .nn.serialize import network_to_dict

    doc = {
        "format_version": ENCODER_FORMAT_VERSION,
        "spec": spec_to_dict(trained.spec) if trained.spec is not None else None,
        "history": [vars(stats) for stats in trained.history],
        "network": network_to_dict(trained.network),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_trained_encoder(path) -> TrainedEncoder:
    from .nn.serialize import network_from_dict

    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MapLoadError(f"{path}: {exc}", kind="corrupt") from exc
    version = doc.get("format_version")
    if version != ENCODER_FORMAT_VERSION:
        raise MapLoadError(f"unsupported encoder format version {version}", kind="version")
    spec = spec_from_dict(doc["spec"]) if doc.get("spec") else None
    history = [EpochStats(**entry) for entry in doc.get("history", [])]
    return TrainedEncoder(spec=spec, network=network_from_dict(doc["network"]), history=history)


class OpCounter:
    """Counts multiply operations on the instrumented compression path."""

    def __init__(self):
        self.multiplies = 0


@dataclass(frozen=True)
class CompressionMap:
    """Exported latent layer: one affine transform plus activation.

    weights is (latent_size, input_dim) float32; activation is recorded so
    probe and trainer agree bit-for-bit on the compression arithmetic.
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str
    source_dataset: str
    preprocess_fingerprint: str

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"map: weights {self.weights.shape}, bias {self.bias.shape}")
        if self.activation not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def latent_size(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    def to_dict(self) -> dict:
        from .nn.serialize import encode_f32

        return {
            "format_version": MAP_FORMAT_VERSION,
            "latent_size": self.latent_size,
            "input_dim": self.input_dim,
            "activation": self.activation,
            "weights": encode_f32(self.weights),
            "bias": encode_f32(self.bias),
            "preprocess_fingerprint": self.preprocess_fingerprint,
            "source_dataset": self.source_dataset,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "CompressionMap":
        from .nn.serialize import decode_f32

        version = doc.get("format_version")
        if version != MAP_FORMAT_VERSION:
            raise MapLoadError(f"unsupported map format version {version}", kind="version")
        try:
            latent = int(doc["latent_size"])
            dim = int(doc["input_dim"])
            weights = decode_f32(doc["weights"], (latent, dim))
            bias = decode_f32(doc["bias"], (latent,))
            return cls(weights, bias, doc["activation"],
                       doc.get("source_dataset", ""), doc["preprocess_fingerprint"])
        except MapLoadError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise MapLoadError(f"invalid map document: {exc}", kind="corrupt") from exc

    @classmethod
    def load(cls, path) -> "CompressionMap":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise MapLoadError(f"{path}: {exc}", kind="corrupt") from exc
        return cls.from_dict(doc)


def export_compression_map(encoder: TrainedEncoder, preprocess: PreprocessModel,
                           source_dataset: str | None = None) -> CompressionMap:
    """Copy the trained latent layer out as a standalone compression map."""
    latent = encoder.network.layers[0]
    return CompressionMap(
        weights=latent.params["weights"].copy(),
        bias=latent.params["bias"].copy(),
        activation=latent.activation,
        source_dataset=source_dataset if source_dataset is not None else preprocess.schema_name,
        preprocess_fingerprint=preprocess.fingerprint(),
    )


def compress(cmap: CompressionMap, x: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """z = activation(W @ x + bias): the probe's only computation.

    With a counter, runs the equivalent scalar loop instead and counts
    every multiply, which tests use to pin the per-record cost to exactly
    latent_size * input_dim.
    """
    x = np.asarray(x)
    if x.shape != (cmap.input_dim,):
        raise ShapeError(f"compress: input {x.shape}, map expects ({cmap.input_dim},)")
    if counter is None:
        return apply_activation(cmap.activation, np.dot(cmap.weights, x) + cmap.bias)
    z = np.zeros(cmap.latent_size, dtype=np.result_type(cmap.weights, x))
    for j in range(cmap.latent_size):
        acc = z.dtype.type(0)
        for k in range(cmap.input_dim):
            acc += cmap.weights[j, k] * x[k]
            counter.multiplies += 1
        z[j] = acc + cmap.bias[j]
    return apply_activation(cmap.activation, z)


def compress_batch(cmap: CompressionMap, features: np.ndarray) -> np.ndarray:
    """Record-by-record compression of a feature matrix.

    Each row goes through the exact single-record path so results match
    what a probe would emit bit-for-bit.
    """
    features = np.asarray(features)
    out = np.empty((len(features), cmap.latent_size), dtype=np.float32)
    for i in range(len(features)):
        out[i] = compress(cmap, features[i])
    return out
