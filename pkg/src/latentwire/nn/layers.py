"""Network layers: dense, LSTM (full-unroll BPTT) and a sequence adapter.

All layers are batch-first. Parameters live in a name -> array dict so the
optimizer and the serializer can address them uniformly; backward() caches
gradients in self.grads under the same names.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import activations


class DenseLayer:
    """Fully connected layer: y = act(x @ W.T + b), W shaped (out, in)."""

    kind = "dense"

    def __init__(self, weights: np.ndarray, bias: np.ndarray, activation: str):
        weights = np.asarray(weights)
        bias = np.asarray(bias)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ShapeError(f"dense layer: weights {weights.shape}, bias {bias.shape}")
        if activation not in activations.ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {activation!r}")
        self.params = {"weights": weights, "bias": bias}
        self.activation = activation
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    @classmethod
    def init(cls, out_dim: int, in_dim: int, activation: str, rng: np.random.Generator,
             dtype=np.float32) -> "DenseLayer":
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(out_dim, in_dim)).astype(dtype)
        b = np.zeros(out_dim, dtype=dtype)
        return cls(w, b, activation)

    @property
    def out_dim(self):
        return self.params["weights"].shape[0]

    @property
    def in_dim(self):
        return self.params["weights"].shape[1]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        w, b = self.params["weights"], self.params["bias"]
        if x.ndim != 2 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"dense forward: input {x.shape}, weights {w.shape}")
        z = x @ w.T + b
        y = activations.apply(self.activation, z)
        if train:
            self._cache = (x, z, y)
        return y

    def forward_single(self, x: np.ndarray) -> np.ndarray:
        """Single-record path: act(W @ x + b).

        This is the exact arithmetic a compression map performs, so the
        exported map and the layer agree bit-for-bit on equal dtypes.
        """
        w, b = self.params["weights"], self.params["bias"]
        if x.shape != (w.shape[1],):
            raise ShapeError(f"dense forward: input {x.shape}, weights {w.shape}")
        return activations.apply(self.activation, np.dot(w, x) + b)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, z, y = self._cache
        dz = grad_out * activations.derivative(self.activation, z, y)
        self.grads = {"weights": dz.T @ x, "bias": dz.sum(axis=0)}
        return dz @ self.params["weights"]


class ExpandToSequence:
    """Adapter turning (n, d) into (n, d, 1): each scalar becomes a timestep.

    The latent vector feeds the recurrent stack one dimension at a time,
    so the recurrence walks the latent dimensions in order.
    """

    kind = "expand_sequence"
    params: dict[str, np.ndarray] = {}
    grads: dict[str, np.ndarray] = {}
    activation = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        return x[:, :, np.newaxis]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out[:, :, 0]


class LstmLayer:
    """Standard LSTM: sigmoid gates, tanh candidate and output squashing.

    Gate weights W_* are (units, input_dim), recurrent U_* are (units,
    units), biases b_* are (units,). Forward consumes (n, T, input_dim);
    output is the full hidden sequence or just h_T.
    """

    kind = "lstm"
    GATES = ("i", "f", "o", "c")

    def __init__(self, params: dict[str, np.ndarray], return_sequences: bool = False):
        units, input_dim = params["w_i"].shape
        for g in self.GATES:
            if params[f"w_{g}"].shape != (units, input_dim):
                raise ShapeError(f"lstm: w_{g} shape {params[f'w_{g}'].shape}")
            if params[f"u_{g}"].shape != (units, units):
                raise ShapeError(f"lstm: u_{g} shape {params[f'u_{g}'].shape}")
            if params[f"b_{g}"].shape != (units,):
                raise ShapeError(f"lstm: b_{g} shape {params[f'b_{g}'].shape}")
        self.params = params
        self.units = units
        self.input_dim = input_dim
        self.return_sequences = return_sequences
        self.activation = None
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    @classmethod
    def init(cls, units: int, input_dim: int, rng: np.random.Generator,
             return_sequences: bool = False, dtype=np.float32) -> "LstmLayer":
        # Glorot-uniform input weights, plain uniform recurrent weights,
        # zero biases except the forget gate (bias 1 keeps early memory open).
        params = {}
        w_limit = np.sqrt(6.0 / (input_dim + units))
        u_limit = np.sqrt(6.0 / (units + units))
        for g in cls.GATES:
            params[f"w_{g}"] = rng.uniform(-w_limit, w_limit, size=(units, input_dim)).astype(dtype)
            params[f"u_{g}"] = rng.uniform(-u_limit, u_limit, size=(units, units)).astype(dtype)
            params[f"b_{g}"] = np.zeros(units, dtype=dtype)
        params["b_f"] = np.ones(units, dtype=dtype)
        return cls(params, return_sequences)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"lstm forward: input {x.shape}, expected (n, T, {self.input_dim})")
        n, T, _ = x.shape
        if T == 0:
            raise ShapeError("lstm forward: empty sequence")
        p = self.params
        dtype = p["w_i"].dtype
        h = np.zeros((n, self.units), dtype=dtype)
        c = np.zeros((n, self.units), dtype=dtype)
        hs = np.empty((n, T, self.units), dtype=dtype)
        gates = []
        cells = [c]
        for t in range(T):
            xt = x[:, t, :]
            i = activations.sigmoid(xt @ p["w_i"].T + h @ p["u_i"].T + p["b_i"])
            f = activations.sigmoid(xt @ p["w_f"].T + h @ p["u_f"].T + p["b_f"])
            o = activations.sigmoid(xt @ p["w_o"].T + h @ p["u_o"].T + p["b_o"])
            g = np.tanh(xt @ p["w_c"].T + h @ p["u_c"].T + p["b_c"])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[:, t, :] = h
            if train:
                gates.append((i, f, o, g, tc))
                cells.append(c)
        if train:
            self._cache = (x, hs, gates, cells)
        return hs if self.return_sequences else hs[:, -1, :]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, hs, gates, cells = self._cache
        n, T, _ = x.shape
        p = self.params
        dtype = p["w_i"].dtype
        if self.return_sequences:
            dhs = grad_out
        else:
            dhs = np.zeros_like(hs)
            dhs[:, -1, :] = grad_out
        g_acc = {name: np.zeros_like(arr) for name, arr in p.items()}
        dx = np.empty_like(x)
        dh_next = np.zeros((n, self.units), dtype=dtype)
        dc_next = np.zeros((n, self.units), dtype=dtype)
        for t in range(T - 1, -1, -1):
            i, f, o, g, tc = gates[t]
            c_prev = cells[t]
            h_prev = hs[:, t - 1, :] if t > 0 else np.zeros((n, self.units), dtype=dtype)
            dh = dhs[:, t, :] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            d_i = dc * g * i * (1.0 - i)
            d_f = dc * c_prev * f * (1.0 - f)
            d_o = dh * tc * o * (1.0 - o)
            d_g = dc * i * (1.0 - g * g)
            xt = x[:, t, :]
            for name, d in zip(self.GATES, (d_i, d_f, d_o, d_g)):
                g_acc[f"w_{name}"] += d.T @ xt
                g_acc[f"u_{name}"] += d.T @ h_prev
                g_acc[f"b_{name}"] += d.sum(axis=0)
            dx[:, t, :] = d_i @ p["w_i"] + d_f @ p["w_f"] + d_o @ p["w_o"] + d_g @ p["w_c"]
            dh_next = d_i @ p["u_i"] + d_f @ p["u_f"] + d_o @ p["u_o"] + d_g @ p["u_c"]
            dc_next = dc * f
        self.grads = g_acc
        return dx


def lstm_forward(layer: LstmLayer, sequence) -> np.ndarray:
    """Run one unbatched sequence through an LSTM; returns the final hidden state."""
    seq = np.asarray(sequence)
    if seq.ndim != 2:
        raise ShapeError(f"expected a (T, input_dim) sequence, got shape {seq.shape}")
    if seq.shape[0] == 0:
        raise ShapeError("empty sequence")
    out = layer.forward(seq[np.newaxis, :, :])
    return out[0, -1, :] if layer.return_sequences else out[0]


def dense_forward(layer: DenseLayer, x) -> np.ndarray:
    """Single-vector dense forward: act(W @ x + b)."""
    return layer.forward_single(np.asarray(x))
