"""Small dense linear programs: a two-phase Bland simplex and the LP builders."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .exceptions import ConfigError, PolicyError
from .model import ArrivalSchedule, ProblemInstance, sigmoid

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9

LE, EQ, GE = "<=", "=", ">="


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """maximize ``objective . x`` s.t. ``A x (senses) rhs``, ``x >= 0``."""

    objective: np.ndarray
    constraint_matrix: np.ndarray
    senses: tuple[str, ...]
    rhs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        A = np.asarray(self.constraint_matrix, dtype=float)
        b = np.asarray(self.rhs, dtype=float).ravel()
        if A.size == 0:
            A = A.reshape(0, c.size)
        if A.ndim != 2 or A.shape[1] != c.size or A.shape[0] != b.size:
            raise ConfigError(f"inconsistent LP dimensions: c{c.shape} A{A.shape} b{b.shape}")
        senses = tuple(self.senses)
        if len(senses) != b.size or any(s not in (LE, EQ, GE) for s in senses):
            raise ConfigError("one sense in {<=, =, >=} per constraint row")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ConfigError("LP coefficients must be finite")
        for name, arr in (("objective", c), ("constraint_matrix", A), ("rhs", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "senses", senses)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Constraint violations of ``x`` (all <= 0 when feasible)."""
        lhs = self.constraint_matrix @ x
        out = np.empty(self.n_rows)
        for r, s in enumerate(self.senses):
            d = lhs[r] - self.rhs[r]
            out[r] = d if s == LE else (-d if s == GE else abs(d))
        return out


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    values: np.ndarray | None = None
    objective_value: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _entering(reduced: np.ndarray, allowed: np.ndarray) -> int:
    """Bland: lowest-index allowed column with positive reduced cost, or -1."""
    cand = np.flatnonzero(allowed & (reduced > PIVOT_TOL))
    return int(cand[0]) if cand.size else -1


def _leaving(tableau: np.ndarray, col: int, basis: np.ndarray) -> int:
    """Min-ratio row; ties go to the row whose basic variable has the lowest index."""
    column = tableau[:, col]
    rows = np.flatnonzero(column > PIVOT_TOL)
    if rows.size == 0:
        return -1
    ratios = tableau[rows, -1] / column[rows]
    best = ratios.min()
    tied = rows[ratios <= best + FEAS_TOL * max(1.0, abs(best))]
    return int(tied[np.argmin(basis[tied])])


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factor = tableau[:, col].copy()
    factor[row] = 0.0
    tableau -= np.outer(factor, tableau[row])


def _run_simplex(tableau, basis, cost, allowed, max_iter) -> bool:
    """Maximise ``cost`` over the tableau in place; False if unbounded."""
    for _ in range(max_iter):
        reduced = cost[:-1] - cost[basis] @ tableau[:, :-1]
        col = _entering(reduced, allowed)
        if col < 0:
            return True
        row = _leaving(tableau, col, basis)
        if row < 0:
            return False
        _pivot(tableau, row, col)
        basis[row] = col
    raise RuntimeError("simplex iteration limit reached")


def solve(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` with a two-phase dense simplex under Bland's pivoting rule."""
    A = lp.constraint_matrix.copy()
    b = lp.rhs.copy()
    senses = list(lp.senses)
    m, nv = A.shape
    for r in range(m):
        if b[r] < 0:
            A[r], b[r] = -A[r], -b[r]
            senses[r] = {LE: GE, GE: LE, EQ: EQ}[senses[r]]

    n_slack = sum(s != EQ for s in senses)
    n_art = sum(s != LE for s in senses)
    width = nv + n_slack + n_art
    tableau = np.zeros((m, width + 1))
    tableau[:, :nv] = A
    tableau[:, -1] = b
    basis = np.empty(m, dtype=int)
    is_art = np.zeros(width, dtype=bool)
    s_col, a_col = nv, nv + n_slack
    for r, s in enumerate(senses):
        if s == LE:
            tableau[r, s_col] = 1.0
            basis[r] = s_col
            s_col += 1
            continue
        if s == GE:
            tableau[r, s_col] = -1.0
            s_col += 1
        tableau[r, a_col] = 1.0
        basis[r] = a_col
        is_art[a_col] = True
        a_col += 1

    max_iter = 50 * (m + width + 1)
    if n_art:
        cost1 = np.zeros(width + 1)
        cost1[:width][is_art] = -1.0
        _run_simplex(tableau, basis, cost1, np.ones(width, dtype=bool), max_iter)
        if tableau[is_art[basis], -1].sum() > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpSolution(LpStatus.INFEASIBLE)
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if not is_art[basis[r]]:
                continue
            cols = np.flatnonzero(~is_art & (np.abs(tableau[r, :width]) > PIVOT_TOL))
            if cols.size:
                _pivot(tableau, r, int(cols[0]))
                basis[r] = cols[0]
            else:
                keep[r] = False  # redundant equality row
        tableau, basis = tableau[keep], basis[keep]

    cost2 = np.zeros(width + 1)
    cost2[:nv] = lp.objective
    if not _run_simplex(tableau, basis, cost2, ~is_art, max_iter):
        return LpSolution(LpStatus.UNBOUNDED)
    x = np.zeros(width)
    x[basis] = tableau[:, -1]
    values = np.maximum(x[:nv], 0.0)
    return LpSolution(LpStatus.OPTIMAL, values, float(lp.objective @ values))


def _assignment_lp(instance: ProblemInstance, probs: np.ndarray, demand: np.ndarray,
                   with_reject: bool, per_unit_rate: bool):
    """Assignment LP shared by the policy LPs and the benchmark.

    With ``per_unit_rate`` the variables are fractions ``s_ij`` weighted by
    ``demand_j``; otherwise they are aggregate allocations ``y_ij`` that must
    sum to ``demand_j``.
    """
    n, L = probs.shape
    rows = n + 1 if with_reject else n
    index = np.arange(rows * L).reshape(rows, L)
    weight = demand[None, :] * probs if per_unit_rate else probs
    c = np.zeros(rows * L)
    c[index[:n].ravel()] = (instance.revenues[:, None] * weight).ravel()
    A = np.zeros((n + L, rows * L))
    for i in range(n):
        A[i, index[i]] = weight[i]
    for j in range(L):
        A[n + j, index[:, j]] = 1.0
    rhs = np.concatenate([instance.capacities, np.ones(L) if per_unit_rate else demand])
    senses = (LE,) * n + (EQ,) * L
    return LinearProgram(c, A, senses, rhs), index


def probs_matrix(instance: ProblemInstance, thetas: Sequence) -> np.ndarray:
    """(n, L) purchase probabilities for one parameter vector per resource."""
    X = instance.features
    return np.array([sigmoid(X @ np.asarray(th, dtype=float)) for th in thetas])


def optimistic_matrix(instance: ProblemInstance, omegas: Sequence) -> np.ndarray:
    """(n, L) optimistic probabilities: max over each resource's confidence set."""
    X = instance.features
    out = np.empty((instance.n, instance.n_types))
    for i, omega in enumerate(omegas):
        omega = np.asarray(omega, dtype=float)
        if omega.size == 0:
            raise PolicyError(f"confidence set of resource {i} is empty")
        out[i] = sigmoid(np.atleast_2d(omega) @ X.T).max(axis=0)
    return out


def lp_from_probs(instance: ProblemInstance, probs: np.ndarray):
    """Per-period LP with the given (n, L) probability coefficients."""
    return _assignment_lp(instance, np.asarray(probs, dtype=float),
                          np.asarray(instance.total_rates), instance.reject_arm_enabled, True)


def build_optimistic_lp(instance: ProblemInstance, omega_per_resource: Sequence):
    """Optimistic LP: coefficients are the max purchase probability over each set."""
    return lp_from_probs(instance, optimistic_matrix(instance, omega_per_resource))


def build_param_lp(instance: ProblemInstance, theta_per_resource: Sequence):
    """LP whose coefficients come from one fixed parameter per resource."""
    return lp_from_probs(instance, probs_matrix(instance, theta_per_resource))


def assignment(solution: LpSolution, index: np.ndarray) -> np.ndarray:
    """Reshape a solution into the (rows, L) assignment matrix."""
    if not solution.optimal:
        raise PolicyError(f"LP not optimal: {solution.status.value}")
    return solution.values[index]


def benchmark_jd(instance: ProblemInstance, schedule: ArrivalSchedule, t: int) -> float:
    """Deterministic revenue upper bound over periods 1..t.

    Aggregate form: ``y_ij`` expected allocations of type j to resource i,
    with the true purchase probabilities and full capacities. Rejection is
    always available so the LP is feasible.
    """
    if not 0 <= t <= instance.horizon:
        raise ConfigError(f"period {t} outside [0, {instance.horizon}]")
    demand = schedule.cumulative(t)
    if t == 0 or not np.any(demand > 0):
        return 0.0
    lp, _ = _assignment_lp(instance, instance.true_probs(), demand, True, False)
    sol = solve(lp)
    if not sol.optimal:
        raise PolicyError(f"benchmark LP {sol.status.value}")
    return sol.objective_value
