"""Minibatch Adam training with validation-patience early stopping."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import encoding, losses
from .network import Network, backward, forward, forward_with_cache


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    validation_patience: int = 5
    rng_seed: int = 0
    collision_penalty_weight: float = 0.1
    r_col: float = 15.0
    n_craft: int = 10  # real craft per training sample, for the collision penalty
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError(f"invalid TrainConfig: {self}")
        if self.validation_patience < 1 or self.collision_penalty_weight < 0:
            raise ValueError(f"invalid TrainConfig: {self}")


@dataclass
class EncodedData:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    def __post_init__(self):
        if len(self.x_train) == 0 or len(self.x_val) == 0:
            raise ValueError("train and validation splits must be non-empty")
        if self.x_train.shape != self.y_train.shape or self.x_val.shape != self.y_val.shape:
            raise ValueError("inputs and targets must have matching shapes")


@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)
    status: str = "running"
    best_epoch: int = 0
    best_val: float = math.inf

    @property
    def train_loss(self) -> list[float]:
        return [e["train_loss"] for e in self.epochs]

    @property
    def val_loss(self) -> list[float]:
        return [e["val_loss"] for e in self.epochs]

    @property
    def seconds(self) -> float:
        return self.epochs[-1]["seconds"] if self.epochs else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
        for e in self.epochs:
            w.writerow([e["epoch"], repr(e["train_loss"]), repr(e["val_loss"]), repr(e["seconds"])])
        return buf.getvalue()


def penalty_weight(cfg: TrainConfig) -> float:
    """Weight on the meter-valued penalty equivalent to ``collision_penalty_weight``
    on normalized positions."""
    return cfg.collision_penalty_weight / encoding.POS_SCALE ** 2


def loss_value(net: Network, pred, target, cfg: TrainConfig) -> float:
    if net.output_layer == "collision_penalized":
        return losses.loss_collision_penalized(pred, target, cfg.n_craft, net.T, cfg.r_col,
                                               penalty_weight(cfg))
    return losses.loss_mse(pred, target)


def loss_grad(net: Network, pred, target, cfg: TrainConfig) -> np.ndarray:
    if net.output_layer == "collision_penalized":
        return losses.collision_penalized_grad(pred, target, cfg.n_craft, net.T, cfg.r_col,
                                               penalty_weight(cfg))
    return losses.mse_grad(pred, target)


def loss_and_grads(net: Network, x, y, cfg: TrainConfig, training: bool = False, rng=None):
    pred, cache = forward_with_cache(net, x, training, rng)
    grads, _ = backward(net, cache, loss_grad(net, pred, y, cfg))
    return loss_value(net, pred, y, cfg), grads


def evaluate(net: Network, x, y, cfg: TrainConfig, batch: int = 256) -> float:
    """Inference-mode loss over a whole split (batched, size-weighted)."""
    total = 0.0
    for k in range(0, len(x), batch):
        xb, yb = x[k:k + batch], y[k:k + batch]
        total += loss_value(net, forward(net, xb), yb, cfg) * len(xb)
    return total / len(x)


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            params[k] -= c.learning_rate * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


def train(net: Network, data: EncodedData, config: TrainConfig | None = None,
          val_override=None) -> tuple[Network, TrainHistory]:
    """Train a copy of ``net``; return the best-validation weights.

    Training stops after ``validation_patience`` consecutive epochs whose
    validation loss exceeds the previous epoch's, at ``max_epochs``, or on
    a non-finite loss (status ``"nan-abort"``). ``val_override`` replaces the
    computed validation loss sequence (a callable ``epoch -> loss``) and
    exists for exercising the stopping rule.
    """
    cfg = config or TrainConfig()
    net = net.copy()
    rng = np.random.default_rng(cfg.rng_seed)
    opt = Adam(net.params, cfg)
    hist = TrainHistory()
    best_params = {k: v.copy() for k, v in net.params.items()}
    rises = 0
    prev_val = math.inf
    t0 = time.perf_counter()
    N = len(data.x_train)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(N)
        batch_losses = []
        for k in range(0, N, cfg.batch_size):
            idx = order[k:k + cfg.batch_size]
            loss, grads = loss_and_grads(net, data.x_train[idx], data.y_train[idx], cfg, True, rng)
            if not math.isfinite(loss):
                hist.status = "nan-abort"
                break
            opt.step(net.params, grads)
            batch_losses.append(loss * len(idx))
        if hist.status == "nan-abort":
            break
        train_loss = float(np.sum(batch_losses) / N)
        val = float(val_override(epoch)) if val_override else evaluate(net, data.x_val, data.y_val, cfg)
        if not math.isfinite(val):
            hist.status = "nan-abort"
            break
        hist.epochs.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val,
                            "seconds": time.perf_counter() - t0})
        if val < hist.best_val:
            hist.best_val, hist.best_epoch = val, epoch
            best_params = {k: v.copy() for k, v in net.params.items()}
        rises = rises + 1 if val > prev_val else 0
        prev_val = val
        if rises >= cfg.validation_patience:
            hist.status = "early-stop"
            break
    else:
        hist.status = "max-epochs"
    net.params = best_params
    return net, hist
