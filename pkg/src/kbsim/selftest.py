"""LP-vs-oracle suite plus a quick invariant smoke run, used by ``kbsim selftest``."""
from __future__ import annotations

import math

import numpy as np

from . import lp as lp_mod
from .model import psi
from .oracle import enumerate_vertices, random_lp
from .simulator import SimulationConfig, benchmark_jd, run_episode


def oracle_suite(cases: int = 1000, seed: int = 0) -> tuple[int, list[str]]:
    """Compare the simplex to vertex enumeration on ``cases`` mixed and ``cases``
    bounded-feasible random LPs. Returns (cases run, failure messages)."""
    rng = np.random.default_rng(seed)
    failures = []
    run = 0
    for bounded in (False, True):
        for k in range(cases):
            prog = random_lp(rng, bounded_feasible=bounded)
            try:
                sol = lp_mod.solve(prog)
            except RuntimeError as exc:
                failures.append(f"case {run}: solver error {exc}")
                run += 1
                continue
            status, value, _ = enumerate_vertices(prog)
            if sol.status is not status:
                failures.append(f"case {run}: status {sol.status.value} != oracle {status.value}")
            elif sol.optimal:
                if abs(sol.objective_value - value) > 1e-8:
                    failures.append(f"case {run}: objective {sol.objective_value} != oracle {value}")
                elif np.any(prog.residuals(sol.values) > 1e-8):
                    failures.append(f"case {run}: infeasible primal point")
            run += 1
    return run, failures


def invariant_smoke(seed: int = 0) -> tuple[int, list[str]]:
    failures = []
    checks = 0

    def check(ok, msg):
        nonlocal checks
        checks += 1
        if not ok:
            failures.append(msg)

    check(psi(0.0) == 0.0 and abs(psi(1.0) - 1.0) < 1e-15, "psi endpoints")
    check(abs(psi(0.5) - (math.sqrt(math.e) - 1) / (math.e - 1)) < 1e-12, "psi(0.5)")
    grid = np.linspace(0, 1, 101)
    vals = np.array([psi(u) for u in grid])
    check(np.all(np.diff(vals) > 0), "psi increasing")
    check(np.all(vals[1:-1] <= (vals[:-2] + vals[2:]) / 2 + 1e-12), "psi convex")

    cfg = SimulationConfig.preset("iid", policy="ulwe", replications=1, base_seed=seed)
    bench = benchmark_jd(cfg.instance.with_capacities([250, 250]), cfg.schedule, 500)
    check(abs(bench - 495.0) <= 1e-6, f"benchmark {bench} != 495")
    curve = [benchmark_jd(cfg.instance, cfg.schedule, t) for t in range(0, 501, 50)]
    check(np.all(np.diff(curve) >= -1e-9), "benchmark not monotone in t")

    small = SimulationConfig.preset("adv1", policy="ulwe", horizon=120, replications=1,
                                    base_seed=seed, resolve_cadence=1)
    for policy in ("alg_lp", "alg_adv", "ulwe"):
        c = SimulationConfig.preset("adv1", policy=policy, horizon=120, replications=1,
                                    base_seed=seed)
        tr1, rg1 = run_episode(c)
        tr2, rg2 = run_episode(c)
        check(np.all(tr1.remaining >= -1e-9), f"{policy}: capacity exceeded")
        check(np.array_equal(tr1.resource, tr2.resource) and np.array_equal(rg1.regret, rg2.regret),
              f"{policy}: non-deterministic")
    tr, _ = run_episode(small)
    check(np.all(np.diff(tr.remaining, axis=0) <= 1e-12), "remaining capacity increased")
    return checks, failures


def run_selftest(cases: int = 1000, seed: int = 0, out=print) -> bool:
    n_lp, lp_fail = oracle_suite(cases, seed)
    out(f"lp oracle suite: {n_lp} cases, {len(lp_fail)} failures")
    n_inv, inv_fail = invariant_smoke(seed)
    out(f"invariant smoke suite: {n_inv} checks, {len(inv_fail)} failures")
    for msg in (lp_fail + inv_fail)[:20]:
        out(f"  FAIL {msg}")
    return not lp_fail and not inv_fail
