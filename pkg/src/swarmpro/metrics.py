"""Evaluation functionals: total L1 fuel, discrete-time collision count, reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


def fuel_cost(controls) -> float:
    """Sum over craft and steps of ``||u||_1``.

    ``controls`` has shape ``(n, T-1, 3)``; any shape works since the L1 sum
    is taken over every entry.
    """
    u = np.asarray(controls, dtype=float)
    return float(np.abs(u).sum())


def pairwise_distances(positions) -> np.ndarray:
    """Distances ``d[t, i, j]`` for positions of shape ``(n, T, 3)``."""
    p = np.asarray(positions, dtype=float)
    diff = p[:, None, :, :] - p[None, :, :, :]  # (n, n, T, 3)
    return np.sqrt(np.einsum("ijtk,ijtk->tij", diff, diff))


def collision_count(trajectories, r_col: float) -> int:
    """Number of (pair, step) events with separation ``<= r_col``.

    ``trajectories`` is ``(n, T, 6)`` (or ``(n, T, 3)`` positions). A distance of
    exactly ``r_col`` counts as a collision.
    """
    traj = np.asarray(trajectories, dtype=float)
    n = traj.shape[0]
    if n < 2:
        return 0
    d = pairwise_distances(traj[..., :3])
    iu, ju = np.triu_indices(n, k=1)
    return int(np.count_nonzero(d[:, iu, ju] <= r_col))


def min_separation(trajectories) -> float:
    traj = np.asarray(trajectories, dtype=float)
    n = traj.shape[0]
    if n < 2:
        return float("inf")
    d = pairwise_distances(traj[..., :3])
    iu, ju = np.triu_indices(n, k=1)
    return float(d[:, iu, ju].min())


def collision_radius(r: float, r_b: float) -> float:
    """Collision radius for spheres of radius ``r`` keeping buffer ``r_b``."""
    if r < 0 or r_b < 0:
        raise ValueError("radius and buffer must be non-negative")
    return 2.0 * r + r_b


@dataclass
class EvalReport:
    """Per-trial fuel/collisions/runtime with aggregate statistics."""

    per_trial: list[tuple[float, int, float]] = field(default_factory=list)
    label: str = ""

    def add(self, fuel: float, collisions: int, runtime: float) -> None:
        self.per_trial.append((float(fuel), int(collisions), float(runtime)))

    def _col(self, k):
        return np.array([row[k] for row in self.per_trial], dtype=float)

    @property
    def fuel_avg(self) -> float:
        return float(np.mean(self._col(0))) if self.per_trial else float("nan")

    @property
    def fuel_max(self) -> float:
        return float(np.max(self._col(0))) if self.per_trial else float("nan")

    @property
    def collisions_avg(self) -> float:
        return float(np.mean(self._col(1))) if self.per_trial else float("nan")

    @property
    def collisions_max(self) -> int:
        return int(np.max(self._col(1))) if self.per_trial else 0

    @property
    def runtime_avg(self) -> float:
        return float(np.mean(self._col(2))) if self.per_trial else float("nan")

    def fuel_ci(self, z: float = 1.96) -> tuple[float, float]:
        """Normal-approximation confidence interval for mean fuel."""
        f = self._col(0)
        if len(f) < 2:
            return (self.fuel_avg, self.fuel_avg)
        half = z * f.std(ddof=1) / np.sqrt(len(f))
        return (float(f.mean() - half), float(f.mean() + half))

    def summary(self) -> dict:
        return {
            "label": self.label,
            "trials": len(self.per_trial),
            "fuel_avg": self.fuel_avg,
            "fuel_max": self.fuel_max,
            "collisions_avg": self.collisions_avg,
            "collisions_max": self.collisions_max,
            "runtime_avg": self.runtime_avg,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "fuel", "collisions", "runtime_s"])
        for k, (f, c, rt) in enumerate(self.per_trial):
            w.writerow([k, repr(f), c, repr(rt)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, label: str = "") -> "EvalReport":
        rep = cls(label=label)
        for row in csv.DictReader(io.StringIO(text)):
            rep.add(float(row["fuel"]), int(row["collisions"]), float(row["runtime_s"]))
        return rep

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)
