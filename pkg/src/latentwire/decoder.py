"""Decoder: an 11-layer MLP reconstructing feature vectors from latents.

Trains against pairs (compress(map, x), x) with the compression map
frozen throughout; the output layer is sigmoid so reconstructions stay in
[0, 1] like the normalized inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoder import CompressionMap, compress_batch, training_from_dict, training_to_dict
from .errors import MapLoadError, ShapeError
from .nn.activations import ACTIVATION_KINDS
from .nn.layers import DenseLayer
from .nn.network import AdamTrainer, Network, TrainingConfig
from .pipeline import FeatureSet

DEFAULT_HIDDEN_LAYERS = (10, 20, 40, 60, 80, 100, 120, 140, 160, 180)
DECODER_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DecoderSpec:
    latent_size: int
    output_dim: int
    training: TrainingConfig
    hidden_layers: tuple[int, ...] = DEFAULT_HIDDEN_LAYERS
    activation: str = "relu"

    def __post_init__(self):
        if len(self.hidden_layers) != 10:
            raise ValueError("decoder uses 10 hidden layers plus the output layer (11 total)")
        if self.latent_size <= 0 or self.output_dim <= 0:
            raise ValueError("latent_size and output_dim must be positive")
        if self.activation not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class ReconstructionReport:
    """Validation-slice reconstruction quality."""

    mse: float
    per_feature_mae: np.ndarray
    sample_count: int


@dataclass
class TrainedDecoder:
    spec: DecoderSpec
    network: Network

    def reconstruct(self, z: np.ndarray) -> np.ndarray:
        """Feature-space reconstruction of one latent vector."""
        z = np.asarray(z, dtype=np.float32)
        if z.shape != (self.spec.latent_size,):
            raise ShapeError(f"reconstruct: latent {z.shape}, expected ({self.spec.latent_size},)")
        return self.network.forward(z[np.newaxis, :])[0]

    def reconstruct_batch(self, latents: np.ndarray) -> np.ndarray:
        latents = np.asarray(latents, dtype=np.float32)
        if latents.ndim != 2 or latents.shape[1] != self.spec.latent_size:
            raise ShapeError(f"reconstruct: latents {latents.shape}")
        return self.network.forward(latents)


def save_trained_decoder(decoder: TrainedDecoder, path) -> None:
    from .nn.serialize import network_to_dict

    doc = {
        "format_version": DECODER_FORMAT_VERSION,
        "spec": {
            "latent_size": decoder.spec.latent_size,
            "output_dim": decoder.spec.output_dim,
            "hidden_layers": list(decoder.spec.hidden_layers),
            "activation": decoder.spec.activation,
            "training": training_to_dict(decoder.spec.training),
        },
        "network": network_to_dict(decoder.network),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_trained_decoder(path) -> TrainedDecoder:
    from .nn.serialize import network_from_dict

    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MapLoadError(f"{path}: {exc}", kind="corrupt") from exc
    version = doc.get("format_version")
    if version != DECODER_FORMAT_VERSION:
        raise MapLoadError(f"unsupported decoder format version {version}", kind="version")
    raw = doc["spec"]
    spec = DecoderSpec(
        latent_size=int(raw["latent_size"]),
        output_dim=int(raw["output_dim"]),
        training=training_from_dict(raw["training"]),
        hidden_layers=tuple(int(w) for w in raw["hidden_layers"]),
        activation=raw["activation"],
    )
    return TrainedDecoder(spec=spec, network=network_from_dict(doc["network"]))


def build_decoder(spec: DecoderSpec, dtype=np.float32) -> Network:
    rng = np.random.default_rng(spec.training.seed)
    layers = []
    prev = spec.latent_size
    for width in spec.hidden_layers:
        layers.append(DenseLayer.init(width, prev, spec.activation, rng, dtype=dtype))
        prev = width
    layers.append(DenseLayer.init(spec.output_dim, prev, "sigmoid", rng, dtype=dtype))
    return Network(layers)


def reconstruction_mse(original: np.ndarray, reconstructed: np.ndarray) -> float:
    """Mean over samples of the per-sample feature-space squared error."""
    if original.shape != reconstructed.shape:
        raise ShapeError(f"mse: {original.shape} vs {reconstructed.shape}")
    diff = original.astype(np.float64) - reconstructed.astype(np.float64)
    return float(np.mean(np.sum(diff * diff, axis=1) / original.shape[1]))


def train_decoder(spec: DecoderSpec, cmap: CompressionMap, data: FeatureSet,
                  validation_fraction: float = 0.1) -> tuple[TrainedDecoder, ReconstructionReport]:
    """Train the decoder on latents of `data`; report on a held-out slice.

    Zero-epoch configs are allowed and report the untrained network's
    reconstruction error. The compression map is read-only here.
    """
    if cmap.latent_size != spec.latent_size:
        raise ShapeError(f"map latent size {cmap.latent_size} != spec latent size {spec.latent_size}")
    if data.dimension != spec.output_dim:
        raise ShapeError(f"data dimension {data.dimension} != spec output dim {spec.output_dim}")
    if len(data) == 0:
        raise ValueError("cannot train a decoder on zero records")

    latents = compress_batch(cmap, data.features)
    targets = data.features

    rng = np.random.default_rng(spec.training.seed)
    order = rng.permutation(len(data))
    n_val = max(1, int(round(validation_fraction * len(data)))) if len(data) > 1 else 0
    val_rows = order[:n_val]
    train_rows = order[n_val:] if n_val else order

    network = build_decoder(spec)
    config = spec.training
    trainer = AdamTrainer(network, config)
    for epoch in range(config.epochs):
        perm = rng.permutation(len(train_rows))
        for start in range(0, len(train_rows), config.batch_size):
            rows = train_rows[perm[start:start + config.batch_size]]
            trainer.step(latents[rows], targets[rows], "mean_squared_error",
                         epoch=epoch, batch=start // config.batch_size)
        trainer.end_epoch()

    decoder = TrainedDecoder(spec=spec, network=network)
    eval_rows = val_rows if n_val else order
    recon = decoder.reconstruct_batch(latents[eval_rows])
    truth = targets[eval_rows]
    report = ReconstructionReport(
        mse=reconstruction_mse(truth, recon),
        per_feature_mae=np.mean(np.abs(truth.astype(np.float64) - recon.astype(np.float64)), axis=0),
        sample_count=len(eval_rows),
    )
    return decoder, report
