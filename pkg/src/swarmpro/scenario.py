"""Passive-relative-orbit transfer instances.

An instance fixes, for every craft, a start state on one relative orbit at
``t = 0`` and a goal state on another relative orbit at the arrival time
``(T - 1) * dt``. Goals are assigned by sorted phase order: the k-th craft
(counting orbit by orbit) receives the k-th goal slot.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .dynamics import CwParams, Pro, default_params, energy_matching_residual, pro_state


class InfeasibleInstanceError(RuntimeError):
    """Endpoint states could not be separated by more than the collision radius."""


MAX_REPHASE_ATTEMPTS = 100


@dataclass(frozen=True)
class ProblemInstance:
    n: int
    T: int
    params: CwParams
    r_col: float
    init_states: np.ndarray  # (n, 6)
    goal_states: np.ndarray  # (n, 6)

    @property
    def dt(self) -> float:
        return self.params.dt

    def validate(self, tol: float = 1e-9) -> None:
        """Raise ``ValueError`` if any instance invariant fails."""
        if self.n < 1 or self.T < 2 or not self.r_col > 0:
            raise ValueError(f"bad sizes: n={self.n}, T={self.T}, r_col={self.r_col}")
        for name, S in (("init", self.init_states), ("goal", self.goal_states)):
            if S.shape != (self.n, 6) or not np.all(np.isfinite(S)):
                raise ValueError(f"{name}_states must be a finite ({self.n}, 6) array")
            for s in S:
                if abs(energy_matching_residual(s, self.params.e_mean)) > tol:
                    raise ValueError(f"{name} state is not energy matched: {s}")
            if _min_sep(S[:, :3]) <= self.r_col:
                raise ValueError(f"{name} states closer than r_col={self.r_col}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "T": self.T,
            "dt": self.params.dt,
            "mu": self.params.mu,
            "r0": self.params.r0,
            "r_col": self.r_col,
            "init_states": self.init_states.tolist(),
            "goal_states": self.goal_states.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemInstance":
        params = CwParams(mu=float(d["mu"]), r0=float(d["r0"]), dt=float(d["dt"]))
        return cls(
            n=int(d["n"]),
            T=int(d["T"]),
            params=params,
            r_col=float(d["r_col"]),
            init_states=np.asarray(d["init_states"], dtype=float).reshape(-1, 6),
            goal_states=np.asarray(d["goal_states"], dtype=float).reshape(-1, 6),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        return cls.from_dict(json.loads(text))

    def subset(self, idx: Sequence[int]) -> "ProblemInstance":
        idx = list(idx)
        return ProblemInstance(
            n=len(idx), T=self.T, params=self.params, r_col=self.r_col,
            init_states=self.init_states[idx].copy(),
            goal_states=self.goal_states[idx].copy(),
        )


@dataclass(frozen=True)
class TransferTemplate:
    """Orbits with the number of craft placed on each.

    ``init_orbits`` and ``goal_orbits`` are lists of ``(Pro, count)``. With
    ``phase_policy="equal"`` the craft on an orbit sit at equally spaced
    phases starting from the orbit's own phase; ``"random"`` draws phases
    uniformly (using the ``rng`` passed to :func:`instantiate`).
    """

    init_orbits: list[tuple[Pro, int]]
    goal_orbits: list[tuple[Pro, int]]
    phase_policy: Literal["equal", "random"] = "equal"

    def __post_init__(self):
        ni = sum(c for _, c in self.init_orbits)
        ng = sum(c for _, c in self.goal_orbits)
        if ni != ng:
            raise ValueError(f"init count {ni} != goal count {ng}")

    @property
    def n(self) -> int:
        return sum(c for _, c in self.init_orbits)


def _min_sep(P: np.ndarray) -> float:
    if len(P) < 2:
        return math.inf
    d = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)
    return float(d[np.triu_indices(len(P), 1)].min())


def _slot_phases(pro: Pro, count: int, policy: str, rng, shift: float) -> np.ndarray:
    if policy == "equal":
        ph = pro.phase + shift + 2.0 * math.pi * np.arange(count) / count
    else:
        ph = rng.uniform(0.0, 2.0 * math.pi, size=count)
    return np.sort(np.mod(ph, 2.0 * math.pi))


def _orbit_states(orbits, policy, rng, params, t, shift):
    states = []
    for pro, count in orbits:
        for ph in _slot_phases(pro, count, policy, rng, shift):
            p = Pro(pro.a_semi, float(ph), pro.slant, pro.y_offset)
            states.append(pro_state(p, params, t))
    return np.array(states).reshape(-1, 6)


def instantiate(template: TransferTemplate, n: int, T: int, r_col: float,
                params: CwParams | None = None, rng=None) -> ProblemInstance:
    """Place craft on the template orbits.

    Init slots are evaluated at ``t = 0`` and goal slots at ``(T-1) dt``. If
    endpoint states collide, all slot phases on the offending side are
    rotated by an ``rng``-drawn common shift and retried.
    """
    if template.n != n:
        raise ValueError(f"template holds {template.n} craft, expected n={n}")
    params = params or default_params(T)
    t_goal = (T - 1) * params.dt
    rng = rng if rng is not None else np.random.default_rng(0)
    init = goal = None
    for attempt in range(MAX_REPHASE_ATTEMPTS):
        shift = 0.0 if attempt == 0 else float(rng.uniform(0.0, 2.0 * math.pi))
        if init is None or _min_sep(init[:, :3]) <= r_col:
            init = _orbit_states(template.init_orbits, template.phase_policy, rng, params, 0.0, shift)
        if goal is None or _min_sep(goal[:, :3]) <= r_col:
            goal = _orbit_states(template.goal_orbits, template.phase_policy, rng, params, t_goal, shift)
        if _min_sep(init[:, :3]) > r_col and _min_sep(goal[:, :3]) > r_col:
            inst = ProblemInstance(n=n, T=T, params=params, r_col=r_col,
                                   init_states=init, goal_states=goal)
            return inst
    raise InfeasibleInstanceError(
        f"no collision-free endpoint phasing after {MAX_REPHASE_ATTEMPTS} attempts")


def split_in_plane_template(n: int = 10) -> TransferTemplate:
    """One 200 m orbit splitting into 100 m and 300 m orbits in the same plane."""
    return TransferTemplate(
        init_orbits=[(Pro(200.0), n)],
        goal_orbits=[(Pro(100.0), n // 2), (Pro(300.0), n - n // 2)],
    )


def split_slanted_template(n: int = 10) -> TransferTemplate:
    """One 200 m orbit splitting into two 200 m orbits tilted by +-45 degrees."""
    return TransferTemplate(
        init_orbits=[(Pro(200.0), n)],
        goal_orbits=[(Pro(200.0, slant=math.pi / 4), n // 2),
                     (Pro(200.0, slant=-math.pi / 4), n - n // 2)],
    )


def _split_counts(n: int, k: int, rng) -> list[int]:
    base = [n // k] * k
    for j in rng.permutation(k)[: n % k]:
        base[j] += 1
    return [c for c in base if c > 0]


def _random_orbits(n: int, rng) -> list[tuple[Pro, int]]:
    k = int(rng.integers(1, 4))
    counts = _split_counts(n, min(k, n), rng)
    orbits = []
    for c in counts:
        orbits.append((Pro(
            a_semi=float(rng.uniform(100.0, 300.0)),
            phase=float(rng.uniform(0.0, 2.0 * math.pi)),
            slant=float(rng.uniform(-math.pi / 4, math.pi / 4)),
        ), c))
    return orbits


def sample_random(seed: int, n: int, T: int, r_col: float,
                  params: CwParams | None = None, max_attempts: int = 200) -> ProblemInstance:
    """Random transfer between 1-3 start orbits and 1-3 goal orbits.

    Semi-major axes are uniform in [100, 300] m, slants uniform in
    [-45, 45] deg and each orbit has a uniform random phase offset; craft on
    an orbit are equally spaced. Deterministic in all arguments.
    """
    params = params or default_params(T)
    rng = np.random.default_rng([int(seed), int(n), int(T)])
    for _ in range(max_attempts):
        tpl = TransferTemplate(_random_orbits(n, rng), _random_orbits(n, rng), "equal")
        try:
            return instantiate(tpl, n, T, r_col, params, rng=rng)
        except InfeasibleInstanceError:
            continue
    raise InfeasibleInstanceError(f"seed {seed}: no feasible instance after {max_attempts} draws")
