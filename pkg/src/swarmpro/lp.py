"""Linear programs of the form

    minimize    c @ x
    subject to  Aeq @ x == beq
                Ain @ x <= bin
                lb <= x <= ub

solved with the HiGHS dual simplex (through :func:`scipy.optimize.linprog`).
Constraint matrices may be dense arrays or ``scipy.sparse`` matrices.
Solver failures are reported through ``LpSolution.status``; only malformed
input raises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED, 4: ITERATION_LIMIT}


def _rows(M, nv, name):
    if M is None:
        return None
    if sps.issparse(M):
        M = sps.csr_matrix(M, dtype=float)
    else:
        M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] and M.shape[1] != nv:
        raise ValueError(f"{name} has {M.shape[1]} columns, expected {nv}")
    return M if M.shape[0] else None


@dataclass
class LpProblem:
    c: np.ndarray
    Aeq: object = None
    beq: np.ndarray | None = None
    Ain: object = None
    bin: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        nv = self.c.size
        self.Aeq = _rows(self.Aeq, nv, "Aeq")
        self.Ain = _rows(self.Ain, nv, "Ain")
        self.beq = _rhs(self.beq, self.Aeq, "beq")
        self.bin = _rhs(self.bin, self.Ain, "bin")
        self.lb = np.full(nv, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(nv, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != nv or self.ub.size != nv:
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub for some variable")

    @property
    def nv(self) -> int:
        return self.c.size


def _rhs(b, M, name):
    m = 0 if M is None else M.shape[0]
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    if b.size != m:
        raise ValueError(f"{name} has length {b.size}, expected {m}")
    return b


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str
    iterations: int = 0
    # multipliers in scipy's sign convention (d objective / d rhs)
    duals: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(p: LpProblem, tol: float = 1e-9, max_iter: int = 100_000) -> LpSolution:
    opts = {
        "primal_feasibility_tolerance": max(tol, 1e-10),
        "dual_feasibility_tolerance": max(tol, 1e-10),
        "maxiter": int(max_iter),
        "presolve": True,
    }
    bounds = np.column_stack([
        np.where(np.isfinite(p.lb), p.lb, -np.inf),
        np.where(np.isfinite(p.ub), p.ub, np.inf),
    ])
    try:
        res = linprog(
            p.c,
            A_ub=p.Ain, b_ub=p.bin if p.Ain is not None else None,
            A_eq=p.Aeq, b_eq=p.beq if p.Aeq is not None else None,
            bounds=bounds, method="highs-ds", options=opts,
        )
    except (ValueError, np.linalg.LinAlgError) as exc:  # numerical breakdown inside the solver
        return LpSolution(np.full(p.nv, np.nan), float("nan"), ITERATION_LIMIT, duals={"error": str(exc)})
    status = _STATUS.get(res.status, ITERATION_LIMIT)
    x = np.asarray(res.x, dtype=float) if res.x is not None else np.full(p.nv, np.nan)
    if status == OPTIMAL:
        # clip bound noise so bound violations are exactly zero
        x = np.minimum(np.maximum(x, p.lb), p.ub)
    duals = {}
    if status == OPTIMAL:
        duals = {
            "eq": np.asarray(res.eqlin.marginals) if p.Aeq is not None else np.zeros(0),
            "ineq": np.asarray(res.ineqlin.marginals) if p.Ain is not None else np.zeros(0),
            "lower": np.asarray(res.lower.marginals),
            "upper": np.asarray(res.upper.marginals),
        }
    obj = float(p.c @ x) if status == OPTIMAL else float("nan")
    return LpSolution(x=x, objective=obj, status=status, iterations=int(getattr(res, "nit", 0)), duals=duals)


def residuals(p: LpProblem, x) -> dict:
    """Max equality residual, inequality violation and bound violation of ``x``."""
    x = np.asarray(x, dtype=float)
    eq = float(np.max(np.abs(p.Aeq @ x - p.beq))) if p.Aeq is not None else 0.0
    ineq = float(np.max(np.maximum(p.Ain @ x - p.bin, 0.0))) if p.Ain is not None else 0.0
    bnd = float(max(np.max(np.maximum(p.lb - x, 0.0), initial=0.0),
                    np.max(np.maximum(x - p.ub, 0.0), initial=0.0)))
    return {"eq": eq, "ineq": ineq, "bound": bnd}
