from .encoding import (
    N_SLOTS,
    POS_SCALE,
    VEL_SCALE,
    decode_output,
    decode_trajectories,
    encode_instance,
    encode_trajectories,
)
from .losses import collision_penalized_grad, loss_collision_penalized, loss_mse, mse_grad
from .models import MODEL_NAMES, MODEL_SPECS, build_model
from .network import Network, backward, forward, forward_with_cache, init_network
from .swarm import predict_swarm, sample_subsets
from .train import EncodedData, TrainConfig, TrainHistory, evaluate, loss_and_grads, train

__all__ = [
    "N_SLOTS", "POS_SCALE", "VEL_SCALE",
    "decode_output", "decode_trajectories", "encode_instance", "encode_trajectories",
    "collision_penalized_grad", "loss_collision_penalized", "loss_mse", "mse_grad",
    "MODEL_NAMES", "MODEL_SPECS", "build_model",
    "Network", "backward", "forward", "forward_with_cache", "init_network",
    "predict_swarm", "sample_subsets",
    "EncodedData", "TrainConfig", "TrainHistory", "evaluate", "loss_and_grads", "train",
]
