"""The six evaluated architectures."""

from __future__ import annotations

from .network import Network, init_network

MODEL_SPECS: dict[str, dict] = {
    "FF1": {"kind": "mlp", "hidden_sizes": (180,), "output_layer": "regression"},
    "FF2": {"kind": "mlp", "hidden_sizes": (180, 150), "output_layer": "regression"},
    "FFcol": {"kind": "mlp", "hidden_sizes": (180,), "output_layer": "collision_penalized"},
    "LSTM1": {"kind": "lstm", "hidden_sizes": (180,), "output_layer": "regression"},
    "LSTM2": {"kind": "lstm", "hidden_sizes": (180, 150), "output_layer": "regression"},
    "LSTMcol": {"kind": "lstm", "hidden_sizes": (180,), "output_layer": "collision_penalized"},
}
MODEL_NAMES = tuple(MODEL_SPECS)


def build_model(name: str, T: int = 11, seed: int = 0, dropout_rate: float = 0.5,
                hidden_sizes=None) -> Network:
    """Untrained network for one of :data:`MODEL_NAMES`; ``hidden_sizes`` overrides."""
    try:
        spec = MODEL_SPECS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}") from None
    return init_network(spec["kind"], hidden_sizes or spec["hidden_sizes"], T=T,
                        dropout_rate=dropout_rate, output_layer=spec["output_layer"],
                        seed=seed, name=name)
