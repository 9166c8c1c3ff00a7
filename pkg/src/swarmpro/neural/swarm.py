"""Applying a fixed-width network to swarms of any size."""

from __future__ import annotations

import math

import numpy as np

from ..scenario import ProblemInstance
from . import encoding
from .network import Network, forward


def sample_subsets(n: int, k: int, cap: int, rng, max_redraws: int = 1000) -> list[tuple[int, ...]]:
    """Distinct ``k``-craft subsets with balanced coverage.

    Round robin over a shuffled cycle of the craft: subset ``j`` of a cycle is
    the window of ``k`` consecutive craft starting at position ``j*k``. One
    cycle lasts ``n / gcd(n, k)`` windows and covers every craft equally, so
    after any number of windows coverage counts differ by at most one. Each
    cycle uses a fresh shuffle, redrawn while it would repeat a subset.
    Returns ``min(cap, C(n, k))`` subsets.
    """
    total = math.comb(n, k)
    want = min(cap, total)
    if want * k < n:
        raise ValueError(f"cap={cap} subsets of {k} cannot cover {n} craft")
    period = n // math.gcd(n, k)
    seen: set[tuple[int, ...]] = set()
    out: list[tuple[int, ...]] = []
    while len(out) < want:
        m = min(period, want - len(out))
        for _ in range(max_redraws):
            perm = rng.permutation(n)
            cycle = [tuple(sorted(int(perm[(j * k + q) % n]) for q in range(k))) for j in range(m)]
            if seen.isdisjoint(cycle):
                break
        else:
            # near-exhaustive requests: take any unseen subsets, favouring the least covered
            counts = np.bincount(np.concatenate(out), minlength=n) if out else np.zeros(n, int)
            cycle = []
            while len(cycle) < m:
                order = np.lexsort((rng.random(n), counts))
                sub = tuple(sorted(int(i) for i in order[:k]))
                while sub in seen or sub in cycle:
                    sub = tuple(sorted(int(i) for i in rng.choice(n, size=k, replace=False)))
                cycle.append(sub)
                counts[list(sub)] += 1
        seen.update(cycle)
        out.extend(cycle)
    return out


def predict_swarm(net: Network, instance: ProblemInstance, combo_cap: int = 100,
                  rng_seed: int = 0) -> np.ndarray:
    """Predicted ``(n, T, 6)`` trajectories for ``instance``.

    The LSTM consumes all craft as one sequence. The MLP pads ``n <= n_slots``
    with virtual craft; for larger swarms it solves up to ``combo_cap``
    ``n_slots``-craft sub-problems and averages each craft's trajectory over
    the sub-problems containing it.
    """
    if instance.T != net.T:
        raise ValueError(f"network trained for T={net.T}, instance has T={instance.T}")
    n, T = instance.n, instance.T
    if net.kind == "lstm":
        x = encoding.encode_instance(instance, n_slots=n)
        return encoding.decode_trajectories(forward(net, x)[0], n, T, n_slots=n)
    S = net.n_slots
    if n <= S:
        x = encoding.encode_instance(instance, n_slots=S)
        return encoding.decode_trajectories(forward(net, x)[0], n, T, n_slots=S)
    rng = np.random.default_rng(rng_seed)
    subsets = sample_subsets(n, S, combo_cap, rng)
    X = np.stack([encoding.encode_instance(instance.subset(s), n_slots=S) for s in subsets])
    preds = encoding.decode_trajectories(forward(net, X), S, T, n_slots=S)  # (m, S, T, 6)
    acc = np.zeros((n, T, 6))
    cnt = np.zeros(n)
    for sub, pr in zip(subsets, preds):
        acc[list(sub)] += pr
        cnt[list(sub)] += 1
    return acc / cnt[:, None, None]
