"""Model files: JSON with base64-encoded little-endian f32 parameter blobs.

Only float32 models are serialized (training precision); the float64 mode
exists for gradient-check tests and is never written to disk. Round-trips
are bit-exact.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from ..errors import MapLoadError
from .layers import DenseLayer, ExpandToSequence, LstmLayer
from .network import Network

FORMAT_VERSION = 1


def encode_f32(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def decode_f32(blob: str, shape) -> np.ndarray:
    try:
        raw = base64.b64decode(blob, validate=True)
    except Exception as exc:
        raise MapLoadError(f"undecodable parameter blob: {exc}", kind="corrupt") from exc
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise MapLoadError(f"parameter blob holds {len(raw)} bytes, expected {expected}", kind="shape")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def _layer_to_dict(layer) -> dict:
    if isinstance(layer, DenseLayer):
        return {
            "kind": "dense",
            "shape": list(layer.params["weights"].shape),
            "activation": layer.activation,
            "weights": encode_f32(layer.params["weights"]),
            "bias": encode_f32(layer.params["bias"]),
        }
    if isinstance(layer, LstmLayer):
        return {
            "kind": "lstm",
            "shape": [layer.units, layer.input_dim],
            "activation": None,
            "return_sequences": layer.return_sequences,
            "params": {name: encode_f32(arr) for name, arr in sorted(layer.params.items())},
        }
    if isinstance(layer, ExpandToSequence):
        return {"kind": "expand_sequence", "shape": [], "activation": None}
    raise TypeError(f"cannot serialize layer {type(layer).__name__}")


def _layer_from_dict(doc: dict):
    kind = doc["kind"]
    if kind == "dense":
        out_dim, in_dim = doc["shape"]
        return DenseLayer(
            decode_f32(doc["weights"], (out_dim, in_dim)),
            decode_f32(doc["bias"], (out_dim,)),
            doc["activation"],
        )
    if kind == "lstm":
        units, input_dim = doc["shape"]
        shapes = {}
        for g in LstmLayer.GATES:
            shapes[f"w_{g}"] = (units, input_dim)
            shapes[f"u_{g}"] = (units, units)
            shapes[f"b_{g}"] = (units,)
        params = {name: decode_f32(doc["params"][name], shapes[name]) for name in shapes}
        return LstmLayer(params, bool(doc.get("return_sequences", False)))
    if kind == "expand_sequence":
        return ExpandToSequence()
    raise MapLoadError(f"unknown layer kind {kind!r}", kind="corrupt")


def network_to_dict(network: Network) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "layers": [_layer_to_dict(layer) for layer in network.layers],
    }


def network_from_dict(doc: dict) -> Network:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise MapLoadError(f"unsupported model format version {version}", kind="version")
    return Network([_layer_from_dict(d) for d in doc["layers"]])


def save_network(network: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(network), fh)
        fh.write("\n")


def load_network(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MapLoadError(f"{path}: not valid JSON: {exc}", kind="corrupt") from exc
    return network_from_dict(doc)
