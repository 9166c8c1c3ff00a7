"""Training losses on flat encodings, each with an analytic gradient."""

from __future__ import annotations

import numpy as np

from . import encoding


def _pair(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return pred, target


def loss_mse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    pred, target = _pair(pred, target)
    return 2.0 * (pred - target) / pred.size


def _positions_m(pred, n, T):
    """Physical positions ``(B, n, T, 3)`` of the first ``n`` slots."""
    B, width = pred.shape
    slots = width // (6 * T)
    block = pred.reshape(B, 6, slots, T)[:, :3, :n, :]
    return np.moveaxis(block, 1, -1) * encoding.POS_SCALE


def collision_penalty(pred, n: int, T: int, r_col: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample mean squared hinge ``max(0, r_col - d)^2`` over pairs and
    steps, and its gradient with respect to ``pred`` (flat layout).

    Distances are in meters. The trainer divides its weight by
    ``POS_SCALE**2`` so the penalty is weighed in normalized units.

    At exact coincidence the hinge is still ``r_col^2`` but its gradient is
    taken as zero (the direction is undefined).
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    B, width = pred.shape
    slots = width // (6 * T)
    grad = np.zeros_like(pred)
    if n < 2:
        return np.zeros(B), grad
    p = _positions_m(pred, n, T)
    iu, ju = np.triu_indices(n, 1)
    diff = p[:, iu] - p[:, ju]  # (B, P, T, 3)
    d = np.linalg.norm(diff, axis=-1)
    gap = np.maximum(r_col - d, 0.0)
    norm = len(iu) * T
    pen = (gap ** 2).sum(axis=(1, 2)) / norm
    safe = np.where(d > 0, d, 1.0)
    coef = np.where(d > 0, -2.0 * gap / safe, 0.0) / norm  # d pen / d dist * 1/dist
    gdiff = coef[..., None] * diff  # d pen / d (p_i - p_j)
    gp = np.zeros_like(p)
    np.add.at(gp, (slice(None), iu), gdiff)
    np.add.at(gp, (slice(None), ju), -gdiff)
    gblock = np.zeros((B, 6, slots, T))
    gblock[:, :3, :n, :] = np.moveaxis(gp, -1, 1) * encoding.POS_SCALE
    grad = gblock.reshape(B, width)
    return pen, grad


def loss_collision_penalized(pred, target, n: int, T: int, r_col: float, lam: float) -> float:
    """MSE plus ``lam`` times the batch-mean collision penalty."""
    pred, target = _pair(pred, target)
    pen, _ = collision_penalty(np.atleast_2d(pred), n, T, r_col)
    return loss_mse(pred, target) + lam * float(pen.mean())


def collision_penalized_grad(pred, target, n: int, T: int, r_col: float, lam: float) -> np.ndarray:
    pred, target = _pair(pred, target)
    shape = pred.shape
    p2 = np.atleast_2d(pred)
    _, g = collision_penalty(p2, n, T, r_col)
    return mse_grad(pred, target) + (lam * g / p2.shape[0]).reshape(shape)
