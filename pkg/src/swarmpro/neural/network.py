"""Feed-forward and LSTM networks with hand-written backpropagation.

Both kinds consume and emit flat encodings ``(B, 6*S*T)`` (see
:mod:`.encoding`). The MLP maps the whole flat vector at once, so its width
is fixed at ``S = n_slots``. The LSTM runs over the craft axis: each sequence
element is one craft's ``6*T`` block, so it accepts any number of craft.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import encoding

KINDS = ("mlp", "lstm")
OUTPUT_LAYERS = ("regression", "collision_penalized")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class Network:
    kind: str
    hidden_sizes: tuple[int, ...]
    T: int = 11
    n_slots: int = encoding.N_SLOTS
    dropout_rate: float = 0.5
    output_layer: str = "regression"
    params: dict[str, np.ndarray] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.output_layer not in OUTPUT_LAYERS:
            raise ValueError(f"output_layer must be one of {OUTPUT_LAYERS}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("need at least one hidden layer of positive width")

    @property
    def element_width(self) -> int:
        return 6 * self.T

    @property
    def in_width(self) -> int:
        """Flat width of one sample for the MLP (per-element width for LSTM)."""
        return 6 * self.T * self.n_slots if self.kind == "mlp" else self.element_width

    def layer_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        d = self.in_width
        for l, h in enumerate(self.hidden_sizes):
            if self.kind == "mlp":
                shapes[f"W{l}"] = (d, h)
                shapes[f"b{l}"] = (h,)
            else:
                shapes[f"W{l}"] = (d + h, 4 * h)
                shapes[f"b{l}"] = (4 * h,)
            d = h
        shapes["Wout"] = (d, self.in_width)
        shapes["bout"] = (self.in_width,)
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(v.shape)) for v in self.params.values())

    def copy(self) -> "Network":
        return Network(self.kind, self.hidden_sizes, self.T, self.n_slots, self.dropout_rate,
                       self.output_layer, {k: v.copy() for k, v in self.params.items()}, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "hidden_sizes": list(self.hidden_sizes),
            "dropout_rate": self.dropout_rate,
            "output_layer": self.output_layer,
            "T": self.T,
            "n_slots": self.n_slots,
            "normalization": {"position_m": encoding.POS_SCALE, "velocity_mps": encoding.VEL_SCALE},
            "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                        for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        norm = d.get("normalization", {})
        if norm and (norm["position_m"] != encoding.POS_SCALE or norm["velocity_mps"] != encoding.VEL_SCALE):
            raise ValueError("model was trained with different normalization constants")
        params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["weights"].items()}
        net = cls(d["kind"], tuple(d["hidden_sizes"]), int(d["T"]), int(d["n_slots"]),
                  float(d["dropout_rate"]), d["output_layer"], params, d.get("name", ""))
        expected = net.layer_shapes()
        got = {k: tuple(v.shape) for k, v in params.items()}
        if got != expected:
            raise ValueError(f"weight shapes {got} do not match architecture {expected}")
        return net

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_network(kind: str, hidden_sizes, T: int = 11, n_slots: int = encoding.N_SLOTS,
                 dropout_rate: float = 0.5, output_layer: str = "regression",
                 seed: int = 0, name: str = "") -> Network:
    """Weights uniform in ``+-1/sqrt(fan_in)``, biases zero."""
    net = Network(kind, tuple(hidden_sizes), T, n_slots, dropout_rate, output_layer, {}, name)
    rng = np.random.default_rng(seed)
    for key, shape in net.layer_shapes().items():
        if key.startswith("W"):
            bound = 1.0 / np.sqrt(shape[0])
            net.params[key] = rng.uniform(-bound, bound, size=shape)
        else:
            net.params[key] = np.zeros(shape)
    return net


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError(f"expected a (batch, width) array, got shape {x.shape}")
    w = x.shape[1]
    if net.kind == "mlp" and w != net.in_width:
        raise ValueError(f"MLP expects width {net.in_width}, got {w}")
    if net.kind == "lstm" and (w == 0 or w % net.element_width):
        raise ValueError(f"LSTM expects a multiple of {net.element_width}, got {w}")
    return x


def _dropout_mask(shape, rate, rng):
    return (rng.random(shape) >= rate) / (1.0 - rate)


# ---------------------------------------------------------------- MLP

def _mlp_forward(net, x, training, rng):
    P = net.params
    h = x
    cache = []
    for l in range(len(net.hidden_sizes)):
        z = h @ P[f"W{l}"] + P[f"b{l}"]
        a = np.maximum(z, 0.0)
        mask = None
        if training and net.dropout_rate > 0:
            mask = _dropout_mask(a.shape, net.dropout_rate, rng)
            a = a * mask
        cache.append((h, z, mask))
        h = a
    out = h @ P["Wout"] + P["bout"]
    return out, (cache, h)


def _mlp_backward(net, cache, g):
    P = net.params
    layers, h_last = cache
    grads = {"Wout": h_last.T @ g, "bout": g.sum(axis=0)}
    dh = g @ P["Wout"].T
    for l in reversed(range(len(layers))):
        h_in, z, mask = layers[l]
        if mask is not None:
            dh = dh * mask
        dz = dh * (z > 0)
        grads[f"W{l}"] = h_in.T @ dz
        grads[f"b{l}"] = dz.sum(axis=0)
        dh = dz @ P[f"W{l}"].T
    return grads, dh


# ---------------------------------------------------------------- LSTM

def _lstm_layer_forward(x, W, b, H):
    B, S, D = x.shape
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, S, H))
    steps = []
    for s in range(S):
        xh = np.concatenate([x[:, s], h], axis=1)
        z = xh @ W + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, s] = h
        steps.append((xh, i, f, g, o, c_prev, tc))
    return hs, steps


def _lstm_layer_backward(dhs, steps, W, D, H):
    B, S, _ = dhs.shape
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[1])
    dx = np.empty((B, S, D))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for s in reversed(range(S)):
        xh, i, f, g, o, c_prev, tc = steps[s]
        dh = dhs[:, s] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        dW += xh.T @ dz
        db += dz.sum(axis=0)
        dxh = dz @ W.T
        dx[:, s] = dxh[:, :D]
        dh_next = dxh[:, D:]
    return dW, db, dx


def _lstm_forward(net, x, training, rng):
    P = net.params
    seq = encoding.to_sequence(x, net.T)
    h = seq
    cache = []
    for l, H in enumerate(net.hidden_sizes):
        hs, steps = _lstm_layer_forward(h, P[f"W{l}"], P[f"b{l}"], H)
        mask = None
        if training and net.dropout_rate > 0:
            mask = _dropout_mask(hs.shape, net.dropout_rate, rng)
            hs = hs * mask
        cache.append((h.shape[2], steps, mask))
        h = hs
    y = h @ P["Wout"] + P["bout"]
    return encoding.from_sequence(y, net.T), (cache, h)


def _lstm_backward(net, cache, g):
    P = net.params
    layers, h_last = cache
    gy = encoding.to_sequence(g, net.T)
    grads = {
        "Wout": np.einsum("bsh,bso->ho", h_last, gy),
        "bout": gy.sum(axis=(0, 1)),
    }
    dh = gy @ P["Wout"].T
    for l in reversed(range(len(layers))):
        D, steps, mask = layers[l]
        if mask is not None:
            dh = dh * mask
        dW, db, dh = _lstm_layer_backward(dh, steps, P[f"W{l}"], D, net.hidden_sizes[l])
        grads[f"W{l}"] = dW
        grads[f"b{l}"] = db
    return grads, encoding.from_sequence(dh, net.T)


# ---------------------------------------------------------------- public

def forward_with_cache(net: Network, x, training: bool = False, rng=None):
    x = _check_input(net, x)
    if training and net.dropout_rate > 0 and rng is None:
        raise ValueError("training-mode dropout needs an rng")
    if net.kind == "mlp":
        return _mlp_forward(net, x, training, rng)
    return _lstm_forward(net, x, training, rng)


def forward(net: Network, x, training: bool = False, rng=None) -> np.ndarray:
    """Network output for a flat batch ``x``.

    Dropout is active only with ``training=True`` (inverted scaling, so the
    inference pass needs no rescaling).
    """
    return forward_with_cache(net, x, training, rng)[0]


def backward(net: Network, cache, grad_out) -> tuple[dict, np.ndarray]:
    """Parameter gradients and input gradient given ``d loss / d output``."""
    if net.kind == "mlp":
        return _mlp_backward(net, cache, grad_out)
    return _lstm_backward(net, cache, grad_out)
