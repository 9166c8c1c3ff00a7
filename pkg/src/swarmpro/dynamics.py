"""Clohessy-Wiltshire relative motion.

State vectors are ordered ``[x, y, z, vx, vy, vz]`` in the LVLH frame of a
circular reference orbit: x radial, y along-track, z along the orbit normal.
Units are SI throughout (m, m/s, m/s^2, s).

The discrete model is exact: ``A`` is the closed-form state transition matrix
and ``B`` is its zero-order-hold input matrix, so propagation introduces no
integration error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MU_EARTH = 3.986004418e14
R0_LEO = 6.778137e6


def mean_motion(mu: float, r0: float) -> float:
    """Angular rate ``sqrt(mu / r0**3)`` of a circular orbit of radius ``r0``."""
    if not (mu > 0 and r0 > 0):
        raise ValueError(f"mean_motion needs mu > 0 and r0 > 0, got mu={mu}, r0={r0}")
    return math.sqrt(mu / r0**3)


@dataclass(frozen=True)
class CwParams:
    """Reference orbit and time step.

    ``e_mean`` is derived from ``mu`` and ``r0`` and cannot be set directly.
    """

    mu: float = MU_EARTH
    r0: float = R0_LEO
    dt: float = 1.0
    e_mean: float = field(init=False)

    def __post_init__(self):
        if not self.dt >= 0 or not math.isfinite(self.dt):
            raise ValueError(f"dt must be finite and non-negative, got {self.dt}")
        object.__setattr__(self, "e_mean", mean_motion(self.mu, self.r0))

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.e_mean

    def with_dt(self, dt: float) -> "CwParams":
        return CwParams(mu=self.mu, r0=self.r0, dt=dt)


def default_params(T: int = 11, mu: float = MU_EARTH, r0: float = R0_LEO,
                   duration: float | None = None) -> CwParams:
    """Parameters for a ``T``-step transfer.

    The transfer lasts half a reference orbit unless ``duration`` is given;
    ``dt = duration / (T - 1)``.
    """
    if T < 2:
        raise ValueError("T must be at least 2")
    if duration is None:
        duration = math.pi / mean_motion(mu, r0)
    return CwParams(mu=mu, r0=r0, dt=duration / (T - 1))


def continuous_matrices(e: float) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time ``(Ac, Bc)`` with ``ds/dt = Ac s + Bc u``."""
    Ac = np.zeros((6, 6))
    Ac[0:3, 3:6] = np.eye(3)
    Ac[3, 0] = 3.0 * e * e
    Ac[3, 4] = 2.0 * e
    Ac[4, 3] = -2.0 * e
    Ac[5, 2] = -e * e
    Bc = np.zeros((6, 3))
    Bc[3:6, :] = np.eye(3)
    return Ac, Bc


def cw_derivative(s, u, params: CwParams) -> np.ndarray:
    """Time derivative of a state under thrust ``u``."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    if s.shape != (6,) or u.shape != (3,):
        raise ValueError(f"expected state (6,) and control (3,), got {s.shape}, {u.shape}")
    e = params.e_mean
    x, _, z, vx, vy, vz = s
    return np.array([
        vx,
        vy,
        vz,
        3.0 * e * e * x + 2.0 * e * vy + u[0],
        -2.0 * e * vx + u[1],
        -e * e * z + u[2],
    ])


def stm(e: float, t: float) -> np.ndarray:
    """Closed-form state transition matrix over elapsed time ``t``."""
    nt = e * t
    s, c = math.sin(nt), math.cos(nt)
    omc = 2.0 * math.sin(0.5 * nt) ** 2  # 1 - cos, without cancellation
    return np.array([
        [4.0 - 3.0 * c, 0.0, 0.0, s / e, 2.0 * omc / e, 0.0],
        [6.0 * (s - nt), 1.0, 0.0, -2.0 * omc / e, (4.0 * s - 3.0 * nt) / e, 0.0],
        [0.0, 0.0, c, 0.0, 0.0, s / e],
        [3.0 * e * s, 0.0, 0.0, c, 2.0 * s, 0.0],
        [-6.0 * e * omc, 0.0, 0.0, -2.0 * s, 4.0 * c - 3.0, 0.0],
        [0.0, 0.0, -e * s, 0.0, 0.0, c],
    ])


def zoh_input_matrix(e: float, t: float) -> np.ndarray:
    """Integral of ``stm(e, tau) @ Bc`` over ``tau`` in ``[0, t]``."""
    nt = e * t
    s = math.sin(nt)
    omc = 2.0 * math.sin(0.5 * nt) ** 2
    e2 = e * e
    return np.array([
        [omc / e2, 2.0 * (nt - s) / e2, 0.0],
        [-2.0 * (nt - s) / e2, 4.0 * omc / e2 - 1.5 * t * t, 0.0],
        [0.0, 0.0, omc / e2],
        [s / e, 2.0 * omc / e, 0.0],
        [-2.0 * omc / e, 4.0 * s / e - 3.0 * t, 0.0],
        [0.0, 0.0, s / e],
    ])


@dataclass(frozen=True)
class DiscreteDynamics:
    A: np.ndarray
    B: np.ndarray
    dt: float


def discretize(params: CwParams) -> DiscreteDynamics:
    e, dt = params.e_mean, params.dt
    return DiscreteDynamics(A=stm(e, dt), B=zoh_input_matrix(e, dt), dt=dt)


def propagate(s0, controls, dyn: DiscreteDynamics) -> np.ndarray:
    """Roll the discrete dynamics forward.

    Parameters
    ----------
    s0 : array_like, shape (6,)
    controls : array_like, shape (T-1, 3)
    dyn : DiscreteDynamics

    Returns
    -------
    ndarray, shape (T, 6)
        ``out[0] = s0`` and ``out[t+1] = A out[t] + B controls[t]``.
    """
    s0 = np.asarray(s0, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if s0.shape != (6,):
        raise ValueError(f"initial state must have shape (6,), got {s0.shape}")
    if controls.ndim != 2 or controls.shape[1] != 3:
        raise ValueError(f"controls must have shape (T-1, 3), got {controls.shape}")
    out = np.empty((controls.shape[0] + 1, 6))
    out[0] = s0
    for t, u in enumerate(controls):
        out[t + 1] = dyn.A @ out[t] + dyn.B @ u
    return out


def implied_controls(traj, dyn: DiscreteDynamics) -> np.ndarray:
    """Least-squares controls reproducing each transition of ``traj``.

    For a dynamically consistent trajectory this recovers the exact controls;
    otherwise the mismatch ``s[t+1] - A s[t]`` is projected onto ``range(B)``.
    Works on a single ``(T, 6)`` trajectory or a stack ``(..., T, 6)``.
    """
    traj = np.asarray(traj, dtype=float)
    resid = traj[..., 1:, :] - traj[..., :-1, :] @ dyn.A.T
    return resid @ np.linalg.pinv(dyn.B).T


def dynamics_residual(traj, controls, dyn: DiscreteDynamics) -> float:
    """Max-abs violation of ``s[t+1] = A s[t] + B u[t]`` (any leading batch dims)."""
    traj = np.asarray(traj, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if traj.shape[-2] < 2:
        return 0.0
    r = traj[..., 1:, :] - traj[..., :-1, :] @ dyn.A.T - controls @ dyn.B.T
    return float(np.max(np.abs(r)))


@dataclass(frozen=True)
class Pro:
    """Passive relative orbit.

    ``a_semi`` is the along-track amplitude of the 2:1 relative ellipse; the
    radial amplitude is half of it. ``slant`` tilts the orbit plane about the
    along-track axis: the cross-track amplitude is ``(a_semi/2) tan(slant)``.
    """

    a_semi: float
    phase: float = 0.0
    slant: float = 0.0
    y_offset: float = 0.0

    def __post_init__(self):
        if self.a_semi < 0:
            raise ValueError(f"a_semi must be non-negative, got {self.a_semi}")
        if not abs(self.slant) < math.pi / 2:
            raise ValueError(f"|slant| must be below pi/2, got {self.slant}")


def pro_state(pro: Pro, params: CwParams, t: float) -> np.ndarray:
    e = params.e_mean
    th = e * t + pro.phase
    sn, cs = math.sin(th), math.cos(th)
    ax = 0.5 * pro.a_semi
    az = ax * math.tan(pro.slant)
    x = ax * sn
    return np.array([
        x,
        pro.a_semi * cs + pro.y_offset,
        az * sn,
        ax * e * cs,
        -2.0 * e * x,
        az * e * cs,
    ])


def energy_matching_residual(s, e_mean: float) -> float:
    """``vy + 2 e x``; zero exactly on a bounded (drift-free) relative orbit."""
    s = np.asarray(s, dtype=float)
    return float(s[4] + 2.0 * e_mean * s[0])
