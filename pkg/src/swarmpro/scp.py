"""Centralized minimum-fuel swarm planner by sequential convex programming.

Each outer iteration solves one LP over all craft jointly:

* exact discrete CW dynamics and fixed start/goal states,
* L1 fuel objective through the split ``u = u_plus - u_minus``,
* every pairwise keep-out constraint ``||p_i - p_j|| >= r_col`` replaced by
  its supporting half-space at the previous iterate ``p_hat``::

      d_ij . (p_i - p_j) >= r_col + margin,   d_ij = unit(p_hat_i - p_hat_j)

* a box trust region ``|p - p_hat|_inf <= trust_radius`` on interior steps.

The half-space is an inner approximation of the keep-out complement, so a
slack-free LP solution is collision free at every discrete step and the
previous iterate stays feasible for the next LP; fuel is therefore
non-increasing once the iterates are slack free. If an LP is infeasible it
is re-solved with penalized slack on the keep-out rows.

The LP is posed in scaled units (100 m, 1/mean-motion) so HiGHS tolerances
are meaningful; the solution is mapped back to SI and polished so dynamics
and boundary equalities hold to rounding error.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sps

from . import lp
from .dynamics import DiscreteDynamics, discretize, dynamics_residual, implied_controls
from .metrics import collision_count, fuel_cost, pairwise_distances
from .scenario import ProblemInstance

log = logging.getLogger(__name__)

LENGTH_SCALE = 100.0
DEGENERATE_SEP = 1e-9
DEGENERATE_SHIFT = 1e-3


@dataclass(frozen=True)
class ScpConfig:
    max_outer_iter: int = 30
    collision_margin: float = 0.5
    trust_radius: float = 50.0
    convergence_tol: float = 1e-3
    seed_mode: Literal["zero", "linear", "provided"] = "zero"
    slack_weight: float = 1e3
    lp_tol: float = 1e-9

    def __post_init__(self):
        if self.max_outer_iter < 1 or self.trust_radius <= 0 or self.convergence_tol <= 0:
            raise ValueError(f"invalid ScpConfig: {self}")
        if self.collision_margin < 0 or self.slack_weight <= 0:
            raise ValueError(f"invalid ScpConfig: {self}")
        if self.seed_mode not in ("zero", "linear", "provided"):
            raise ValueError(f"unknown seed_mode {self.seed_mode!r}")


@dataclass
class IterationRecord:
    fuel: float
    slack: float
    softened: bool
    trust_active: bool
    status: str


@dataclass
class PlanResult:
    trajectories: np.ndarray  # (n, T, 6)
    controls: np.ndarray  # (n, T-1, 3)
    fuel: float
    collisions: int
    iterations: int
    converged: bool
    solve_time: float
    history: list[IterationRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "trajectories": self.trajectories.tolist(),
            "controls": self.controls.tolist(),
            "fuel": self.fuel,
            "collisions": self.collisions,
            "iterations": self.iterations,
            "converged": self.converged,
            "solve_time_s": self.solve_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PlanResult":
        return cls(
            trajectories=np.asarray(d["trajectories"], dtype=float),
            controls=np.asarray(d["controls"], dtype=float),
            fuel=float(d["fuel"]),
            collisions=int(d["collisions"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            solve_time=float(d["solve_time_s"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "PlanResult":
        return cls.from_dict(json.loads(text))


def seed_linear(instance: ProblemInstance) -> np.ndarray:
    """Straight-line position interpolation between start and goal.

    Endpoints keep the exact start/goal states; interior velocities are
    central differences of the interpolated positions. Returns ``(n, T, 6)``.
    """
    T = instance.T
    alpha = np.linspace(0.0, 1.0, T)[None, :, None]
    p0 = instance.init_states[:, None, :3]
    p1 = instance.goal_states[:, None, :3]
    traj = np.zeros((instance.n, T, 6))
    traj[:, :, :3] = (1.0 - alpha) * p0 + alpha * p1
    if T > 2:
        traj[:, 1:-1, 3:] = (traj[:, 2:, :3] - traj[:, :-2, :3]) / (2.0 * instance.dt)
    traj[:, 0] = instance.init_states
    traj[:, -1] = instance.goal_states
    return traj


class _Scaling:
    """Maps SI states/controls to the LP's scaled units."""

    def __init__(self, e: float, dyn: DiscreteDynamics):
        L = LENGTH_SCALE
        self.L = L
        self.state = np.array([L, L, L, L * e, L * e, L * e])
        self.accel = L * e * e
        D = np.diag(1.0 / self.state)
        Dinv = np.diag(self.state)
        self.A = D @ dyn.A @ Dinv
        self.B = D @ dyn.B * self.accel


class _Layout:
    def __init__(self, n: int, T: int, n_slack: int = 0):
        self.n, self.T = n, T
        self.nx = n * T * 6
        self.nu = n * (T - 1) * 3
        self.x0 = 0
        self.u0 = self.nx
        self.up0 = self.u0 + self.nu
        self.um0 = self.up0 + self.nu
        self.s0 = self.um0 + self.nu
        self.nv = self.s0 + n_slack

    def state_index(self, i, t, k):
        return self.x0 + (np.asarray(i) * self.T + np.asarray(t)) * 6 + np.asarray(k)


def _equality_block(n: int, T: int, sc: _Scaling) -> sps.csr_matrix:
    """Dynamics rows and control-split rows for all craft."""
    m = T - 1
    # per craft: s[t+1] - A s[t] - B u[t] = 0
    shift = sps.eye(m, T, k=1, format="csr")
    stay = sps.eye(m, T, k=0, format="csr")
    Dx1 = sps.kron(shift, sps.eye(6)) - sps.kron(stay, sc.A)
    Du1 = -sps.kron(sps.eye(m), sc.B)
    In = sps.eye(n)
    Dx = sps.kron(In, Dx1)
    Du = sps.kron(In, Du1)
    nu = n * m * 3
    Iu = sps.eye(nu)
    Zx = sps.csr_matrix((nu, n * T * 6))
    Zu_dyn = sps.csr_matrix((Dx.shape[0], nu))
    dyn_rows = sps.hstack([Dx, Du, Zu_dyn, Zu_dyn])
    split_rows = sps.hstack([Zx, Iu, -Iu, Iu])  # u - u_plus + u_minus = 0
    return sps.vstack([dyn_rows, split_rows]).tocsr()


def _keepout_rows(p_hat: np.ndarray, T: int, layout: _Layout, rhs_dist: float, soft: bool):
    """Half-space rows ``-d.(p_i - p_j) [- sigma] <= -rhs_dist`` for interior steps."""
    n = p_hat.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    ts = np.arange(1, T - 1)
    if len(iu) == 0 or len(ts) == 0:
        return None, None, 0
    P, TT = np.meshgrid(np.arange(len(iu)), ts, indexing="ij")
    P, TT = P.ravel(), TT.ravel()
    I, J = iu[P], ju[P]
    diff = p_hat[I, TT] - p_hat[J, TT]
    norm = np.linalg.norm(diff, axis=1)
    bad = norm < DEGENERATE_SEP
    if np.any(bad):
        diff[bad] = diff[bad] + np.array([DEGENERATE_SHIFT, 0.0, 0.0])
        norm[bad] = np.linalg.norm(diff[bad], axis=1)
    d = diff / norm[:, None]
    m = len(P)
    rows = np.repeat(np.arange(m), 6)
    cols = np.concatenate([
        layout.state_index(I[:, None], TT[:, None], np.arange(3)[None, :]),
        layout.state_index(J[:, None], TT[:, None], np.arange(3)[None, :]),
    ], axis=1).ravel()
    vals = np.concatenate([-d, d], axis=1).ravel()
    if soft:
        rows = np.concatenate([rows, np.arange(m)])
        cols = np.concatenate([cols, layout.s0 + np.arange(m)])
        vals = np.concatenate([vals, -np.ones(m)])
    A = sps.csr_matrix((vals, (rows, cols)), shape=(m, layout.nv))
    b = np.full(m, -rhs_dist)
    return A, b, m


def _n_keepout(n: int, T: int) -> int:
    return n * (n - 1) // 2 * max(T - 2, 0)


def _build_lp(instance: ProblemInstance, sc: _Scaling, p_hat: np.ndarray, cfg: ScpConfig,
              soft: bool, eq_block: sps.csr_matrix) -> tuple[lp.LpProblem, _Layout]:
    n, T = instance.n, instance.T
    layout = _Layout(n, T, _n_keepout(n, T) if soft else 0)
    c = np.zeros(layout.nv)
    c[layout.up0:layout.s0] = 1.0
    if soft:
        c[layout.s0:] = cfg.slack_weight
    Aeq = eq_block
    if layout.nv > eq_block.shape[1]:
        Aeq = sps.hstack([eq_block, sps.csr_matrix((eq_block.shape[0], layout.nv - eq_block.shape[1]))]).tocsr()
    beq = np.zeros(Aeq.shape[0])

    lb = np.full(layout.nv, -np.inf)
    ub = np.full(layout.nv, np.inf)
    lb[layout.up0:] = 0.0  # u_plus, u_minus, slack
    X_lb = lb[:layout.nx].reshape(n, T, 6)
    X_ub = ub[:layout.nx].reshape(n, T, 6)
    s_init = instance.init_states / sc.state
    s_goal = instance.goal_states / sc.state
    X_lb[:, 0], X_ub[:, 0] = s_init, s_init
    X_lb[:, -1], X_ub[:, -1] = s_goal, s_goal
    if n > 1 and T > 2:
        ph = p_hat[:, 1:-1] / sc.L
        R = cfg.trust_radius / sc.L
        X_lb[:, 1:-1, :3] = ph - R
        X_ub[:, 1:-1, :3] = ph + R

    Ain, bin_, _ = _keepout_rows(p_hat / sc.L, T, layout,
                                 (instance.r_col + cfg.collision_margin) / sc.L, soft)
    return lp.LpProblem(c=c, Aeq=Aeq, beq=beq, Ain=Ain, bin=bin_, lb=lb, ub=ub), layout


def _terminal_map(dyn: DiscreteDynamics, m: int) -> np.ndarray:
    """Matrix ``C`` with ``s[m] = A^m s[0] + C @ u.ravel()``."""
    blocks = []
    Ak = np.eye(6)
    for _ in range(m):
        blocks.append(Ak @ dyn.B)
        Ak = dyn.A @ Ak
    return np.hstack(blocks[::-1])


def _polish(instance: ProblemInstance, dyn: DiscreteDynamics, controls: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Re-propagate controls exactly and remove the terminal miss with a
    minimum-norm control correction."""
    n, T = instance.n, instance.T
    C = _terminal_map(dyn, T - 1)
    Cpinv = np.linalg.pinv(C)
    U = controls.copy()
    traj = np.empty((n, T, 6))
    for i in range(n):
        for _ in range(2):
            x = instance.init_states[i].copy()
            traj[i, 0] = x
            for t in range(T - 1):
                x = dyn.A @ x + dyn.B @ U[i, t]
                traj[i, t + 1] = x
            miss = instance.goal_states[i] - traj[i, -1]
            U[i] += (Cpinv @ miss).reshape(T - 1, 3)
        traj[i, -1] = instance.goal_states[i]
    return traj, U


def fallback_plan(instance: ProblemInstance, dyn: DiscreteDynamics | None = None):
    """Minimum-energy transfer ignoring collisions; always exists for T >= 3."""
    dyn = dyn or discretize(instance.params)
    U = np.zeros((instance.n, instance.T - 1, 3))
    return _polish(instance, dyn, U)


def repair_plan(instance: ProblemInstance, trajectories, dyn: DiscreteDynamics | None = None):
    """Dynamically feasible transfer closest to a guessed trajectory set.

    Controls are fitted to each step of the guess by least squares, then the
    craft are flown from their exact initial states and the terminal miss is
    removed with a minimum-norm correction. Returns ``(trajectories, controls)``.
    """
    dyn = dyn or discretize(instance.params)
    guess = np.asarray(trajectories, dtype=float)
    if guess.shape != (instance.n, instance.T, 6):
        raise ValueError(f"expected guess of shape {(instance.n, instance.T, 6)}, got {guess.shape}")
    return _polish(instance, dyn, implied_controls(guess, dyn))


def _seed_positions(instance: ProblemInstance, cfg: ScpConfig, seed) -> np.ndarray:
    n, T = instance.n, instance.T
    if seed is not None:
        seed = np.asarray(seed, dtype=float)
        if seed.shape[:2] != (n, T) or seed.shape[2] not in (3, 6):
            raise ValueError(f"seed must have shape ({n}, {T}, 6), got {seed.shape}")
        return seed[..., :3].copy()
    if cfg.seed_mode == "provided":
        raise ValueError("seed_mode='provided' needs a seed trajectory")
    if cfg.seed_mode == "linear":
        return seed_linear(instance)[..., :3]
    return np.zeros((n, T, 3))


def _seed_reference_fuel(instance, dyn, seed) -> float | None:
    """Fuel of a provided seed when it is itself a feasible transfer."""
    if seed is None:
        return None
    seed = np.asarray(seed, dtype=float)
    if seed.shape[-1] != 6:
        return None
    if np.max(np.abs(seed[:, 0] - instance.init_states)) > 1e-6:
        return None
    if np.max(np.abs(seed[:, -1] - instance.goal_states)) > 1e-6:
        return None
    U = implied_controls(seed, dyn)
    if dynamics_residual(seed, U, dyn) > 1e-6:
        return None
    return fuel_cost(U)


def _interior_min_sep(traj: np.ndarray) -> float:
    n = traj.shape[0]
    if n < 2 or traj.shape[1] < 3:
        return np.inf
    d = pairwise_distances(traj[:, 1:-1, :3])
    iu, ju = np.triu_indices(n, 1)
    return float(d[:, iu, ju].min())


def solve(instance: ProblemInstance, config: ScpConfig | None = None, seed=None) -> PlanResult:
    """Plan minimum-fuel collision-free transfers for every craft.

    Parameters
    ----------
    instance : ProblemInstance
    config : ScpConfig, optional
    seed : array_like, optional
        Initial guess ``(n, T, 6)`` or ``(n, T, 3)``; overrides
        ``config.seed_mode``. A seed that is already a feasible transfer
        lets the loop stop after a single LP if that LP does not improve fuel.

    Returns
    -------
    PlanResult
        Always dynamically feasible with exact endpoints. ``converged`` is
        False when the iteration budget ran out, an LP failed, or slack was
        still in use.
    """
    cfg = config or ScpConfig()
    t_start = time.perf_counter()
    n, T = instance.n, instance.T
    dyn = discretize(instance.params)
    sc = _Scaling(instance.params.e_mean, dyn)
    eq_block = _equality_block(n, T, sc)
    p_hat = _seed_positions(instance, cfg, seed)
    prev_fuel = _seed_reference_fuel(instance, dyn, seed)
    apply_tr = n > 1 and T > 2

    history: list[IterationRecord] = []
    best = None  # last slack-free iterate
    last = None
    converged = False
    for _ in range(cfg.max_outer_iter):
        softened = False
        problem, layout = _build_lp(instance, sc, p_hat, cfg, False, eq_block)
        sol = lp.solve_lp(problem, tol=cfg.lp_tol)
        if not sol.ok:
            softened = True
            problem, layout = _build_lp(instance, sc, p_hat, cfg, True, eq_block)
            sol = lp.solve_lp(problem, tol=cfg.lp_tol)
        if not sol.ok:
            history.append(IterationRecord(float("nan"), float("nan"), softened, False, sol.status))
            log.warning("LP failed (%s); stopping SCP", sol.status)
            break
        U = sol.x[layout.u0:layout.up0].reshape(n, T - 1, 3) * sc.accel
        traj, U = _polish(instance, dyn, U)
        fuel = fuel_cost(U)
        slack = float(sol.x[layout.s0:].sum() * sc.L) if softened else 0.0
        trust_active = False
        if apply_tr:
            step = np.abs(traj[:, 1:-1, :3] - p_hat[:, 1:-1])
            trust_active = bool(np.max(step) >= cfg.trust_radius * (1.0 - 1e-6))
        history.append(IterationRecord(fuel, slack, softened, trust_active, sol.status))
        last = (traj, U)
        hard_ok = slack <= 1e-9 and _interior_min_sep(traj) > instance.r_col
        if hard_ok:
            best = (traj, U)
            if (not trust_active and prev_fuel is not None
                    and abs(fuel - prev_fuel) <= cfg.convergence_tol * max(prev_fuel, fuel) + 1e-12):
                converged = True
                break
            prev_fuel = fuel
        else:
            prev_fuel = None
        p_hat = traj[..., :3]

    if best is not None:
        traj, U = best
    elif last is not None:
        traj, U = last
    else:
        traj, U = fallback_plan(instance, dyn)
    return PlanResult(
        trajectories=traj,
        controls=U,
        fuel=fuel_cost(U),
        collisions=collision_count(traj, instance.r_col),
        iterations=len(history),
        converged=converged,
        solve_time=time.perf_counter() - t_start,
        history=history,
    )


def single_lp_plan(instance: ProblemInstance) -> tuple[float, np.ndarray]:
    """One-shot L1 fuel LP with no keep-out rows or trust region.

    Exact optimum of the problem when collisions are ignored (e.g. ``n = 1``).
    Returns ``(fuel, controls)`` in SI units.
    """
    n, T = instance.n, instance.T
    dyn = discretize(instance.params)
    sc = _Scaling(instance.params.e_mean, dyn)
    layout = _Layout(n, T)
    eq = _equality_block(n, T, sc)
    c = np.zeros(layout.nv)
    c[layout.up0:] = 1.0
    lb = np.full(layout.nv, -np.inf)
    ub = np.full(layout.nv, np.inf)
    lb[layout.up0:] = 0.0
    X_lb = lb[:layout.nx].reshape(n, T, 6)
    X_ub = ub[:layout.nx].reshape(n, T, 6)
    X_lb[:, 0] = X_ub[:, 0] = instance.init_states / sc.state
    X_lb[:, -1] = X_ub[:, -1] = instance.goal_states / sc.state
    sol = lp.solve_lp(lp.LpProblem(c=c, Aeq=eq, beq=np.zeros(eq.shape[0]), lb=lb, ub=ub))
    if not sol.ok:
        raise RuntimeError(f"single-shot LP failed: {sol.status}")
    U = sol.x[layout.u0:layout.up0].reshape(n, T - 1, 3) * sc.accel
    _, U = _polish(instance, dyn, U)
    return fuel_cost(U), U


def warm_start_solve(instance: ProblemInstance, config: ScpConfig | None = None,
                     seed_source: str = "zero", network=None, rng_seed: int = 0) -> PlanResult:
    """Solve from a zero, straight-line, or network-predicted initial guess."""
    cfg = config or ScpConfig()
    if seed_source in ("zero", "linear"):
        from dataclasses import replace
        return solve(instance, replace(cfg, seed_mode=seed_source))
    if seed_source == "network":
        if network is None:
            raise ValueError("seed_source='network' needs a trained network")
        from .neural import predict_swarm
        guess = predict_swarm(network, instance, rng_seed=rng_seed)
        return solve(instance, cfg, seed=guess)
    raise ValueError(f"unknown seed_source {seed_source!r}")


def config_dict(cfg: ScpConfig) -> dict:
    return asdict(cfg)
