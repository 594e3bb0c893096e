"""Brute-force LP oracle by basic-feasible-solution enumeration.

Deliberately independent of the simplex: it enumerates every choice of
``n_vars`` active constraints, solves the square system and keeps the best
feasible point.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

from .lp import EQ, GE, LE, LinearProgram, LpStatus

BOX = 1e6


def enumerate_vertices(lp: LinearProgram, tol: float = 1e-9):
    """Return ``(status, best_value, best_point)`` for ``lp``.

    Unboundedness is detected by adding ``sum(x) <= BOX`` and checking
    whether the optimum sits on that artificial face.
    """
    nv = lp.n_vars
    rows, rhs, is_eq = [], [], []
    for a, s, b in zip(lp.constraint_matrix, lp.senses, lp.rhs):
        if s == GE:
            a, b = -a, -b
        rows.append(a)
        rhs.append(b)
        is_eq.append(s == EQ)
    for k in range(nv):
        e = np.zeros(nv)
        e[k] = -1.0
        rows.append(e)
        rhs.append(0.0)
        is_eq.append(False)
    rows.append(np.ones(nv))
    rhs.append(BOX)
    is_eq.append(False)
    G = np.array(rows)
    h = np.array(rhs)
    eq_idx = [r for r, e in enumerate(is_eq) if e]
    ineq_idx = [r for r, e in enumerate(is_eq) if not e]
    if len(eq_idx) > nv:
        # Over-determined equalities: choose nv of them, feasibility check covers the rest.
        free = nv
        pools = combinations(range(len(G)), nv)
    else:
        free = nv - len(eq_idx)
        pools = (tuple(eq_idx) + c for c in combinations(ineq_idx, free))
    subsets = np.array(list(pools), dtype=int)
    if subsets.size == 0:
        return LpStatus.INFEASIBLE, float("nan"), None
    M = G[subsets]
    rhs_sub = h[subsets]
    dets = np.abs(np.linalg.det(M))
    ok = dets > 1e-12
    if not np.any(ok):
        return LpStatus.INFEASIBLE, float("nan"), None
    pts = np.linalg.solve(M[ok], rhs_sub[ok][..., None])[..., 0]
    viol = pts @ G.T - h
    feasible = np.all(viol <= tol * (1 + np.abs(h)), axis=1)
    if eq_idx:
        eq_gap = np.abs(pts @ G[eq_idx].T - h[eq_idx])
        feasible &= np.all(eq_gap <= tol * (1 + np.abs(h[eq_idx])), axis=1)
    if not np.any(feasible):
        return LpStatus.INFEASIBLE, float("nan"), None
    pts = pts[feasible]
    vals = pts @ lp.objective
    k = int(np.argmax(vals))
    best = pts[k]
    if best.sum() > BOX / 2:
        return LpStatus.UNBOUNDED, float("nan"), None
    return LpStatus.OPTIMAL, float(vals[k]), best


def random_lp(rng: np.random.Generator, max_vars: int = 5, max_rows: int = 5,
              bounded_feasible: bool = False) -> LinearProgram:
    """Random small LP.

    By default a mix of feasible, infeasible and unbounded cases. With
    ``bounded_feasible`` the rows are built around a random nonnegative point
    and the last row caps ``sum(x)``, so an optimum always exists.
    """
    nv = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    A = rng.integers(-3, 6, size=(m, nv)).astype(float)
    A += np.round(rng.normal(scale=0.5, size=(m, nv)), 2)
    senses = tuple(rng.choice([LE, LE, LE, EQ, GE], size=m))
    c = np.round(rng.normal(size=nv) * 3, 2)
    if not bounded_feasible:
        b = np.round(rng.uniform(-2, 10, size=m), 2)
        return LinearProgram(c, A, senses, b)
    x0 = np.round(rng.uniform(0, 3, size=nv) * (rng.random(nv) < 0.7), 2)
    slack = np.round(rng.uniform(0, 4, size=m), 2)
    b = A @ x0
    b = np.where(np.array(senses) == LE, b + slack, np.where(np.array(senses) == GE, b - slack, b))
    A[-1] = np.abs(A[-1]) + 0.5
    b[-1] = A[-1] @ x0 + slack[-1]
    senses = senses[:-1] + (LE,)
    return LinearProgram(c, A, senses, b)
