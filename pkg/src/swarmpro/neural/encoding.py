"""Network input/output encoding.

A problem (or its solution) is a ``6 x (S*T)`` matrix: each of the ``S``
craft slots contributes its ``6 x T`` trajectory block, blocks concatenated
horizontally. Flattening is row-major, so entry ``(k, i*T + t)`` lives at
flat index ``k*S*T + i*T + t``. Positions are divided by ``POS_SCALE`` and
velocities by ``VEL_SCALE``. Empty slots (``n < S``) are zero: virtual craft
parked at the origin.

The network input is the straight-line seed between the start and goal
states, which has the trajectory shape while carrying exactly the endpoint
information.
"""

from __future__ import annotations

import numpy as np

from ..scenario import ProblemInstance

N_SLOTS = 10
POS_SCALE = 400.0
VEL_SCALE = 0.5


def _scales() -> np.ndarray:
    return np.array([POS_SCALE] * 3 + [VEL_SCALE] * 3)


def encode_trajectories(traj, n_slots: int = N_SLOTS) -> np.ndarray:
    """Flat normalized encoding of ``(n, T, 6)`` trajectories, ``n <= n_slots``."""
    traj = np.asarray(traj, dtype=float)
    n, T, _ = traj.shape
    if n > n_slots:
        raise ValueError(f"{n} craft do not fit in {n_slots} slots; use combination averaging")
    block = np.zeros((6, n_slots, T))
    block[:, :n, :] = (traj / _scales()).transpose(2, 0, 1)
    return block.reshape(-1)


def decode_trajectories(flat, n: int, T: int, n_slots: int = N_SLOTS) -> np.ndarray:
    """Inverse of :func:`encode_trajectories`; drops slots beyond ``n``.

    Accepts a single flat vector or a batch ``(B, width)``.
    """
    flat = np.asarray(flat, dtype=float)
    width = 6 * n_slots * T
    if flat.shape[-1] != width:
        raise ValueError(f"expected width {width} (= 6*{n_slots}*{T}), got {flat.shape[-1]}")
    if n > n_slots:
        raise ValueError(f"n={n} exceeds {n_slots} slots")
    lead = flat.shape[:-1]
    block = flat.reshape(*lead, 6, n_slots, T)[..., :n, :]
    return np.moveaxis(block, -3, -1) * _scales()


def encode_instance(instance: ProblemInstance, n_slots: int = N_SLOTS) -> np.ndarray:
    from ..scp import seed_linear

    return encode_trajectories(seed_linear(instance), n_slots)


def decode_output(t, n: int, T: int, n_slots: int = N_SLOTS) -> np.ndarray:
    return decode_trajectories(t, n, T, n_slots)


def to_sequence(flat, T: int) -> np.ndarray:
    """``(B, 6*S*T)`` flat batch to ``(B, S, 6*T)`` per-craft sequence."""
    flat = np.asarray(flat)
    B = flat.shape[0]
    S = flat.shape[1] // (6 * T)
    return flat.reshape(B, 6, S, T).transpose(0, 2, 1, 3).reshape(B, S, 6 * T)


def from_sequence(seq, T: int) -> np.ndarray:
    seq = np.asarray(seq)
    B, S, _ = seq.shape
    return seq.reshape(B, S, 6, T).transpose(0, 2, 1, 3).reshape(B, 6 * S * T)
