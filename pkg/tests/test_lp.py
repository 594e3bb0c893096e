import math

import numpy as np
import pytest
from scipy.optimize import linprog

from kbsim.exceptions import ConfigError
from kbsim.lp import (EQ, GE, LE, LinearProgram, LpStatus, assignment, benchmark_jd,
                      build_optimistic_lp, build_param_lp, optimistic_matrix, solve)
from kbsim.model import ArrivalSchedule
from kbsim.oracle import enumerate_vertices, random_lp

from conftest import iid_schedule, make_instance


def test_single_constraint():
    sol = solve(LinearProgram([1.0], [[1.0]], (LE,), [3.0]))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.values == pytest.approx([3.0])
    assert sol.objective_value == pytest.approx(3.0)


def test_degenerate_face():
    sol = solve(LinearProgram([1.0, 1.0], [[1, 1], [1, 0]], (LE, LE), [1.0, 0.4]))
    assert sol.objective_value == pytest.approx(1.0, abs=1e-12)


def test_infeasible_and_unbounded_are_statuses():
    assert solve(LinearProgram([1.0], [[1.0]], (GE,), [-1.0])).status is LpStatus.UNBOUNDED
    assert solve(LinearProgram([1.0], [[1.0], [1.0]], (LE, GE), [1.0, 2.0])).status is LpStatus.INFEASIBLE
    assert solve(LinearProgram([1.0, 0.0], [[1.0, 1.0]], (EQ,), [-1.0])).status is LpStatus.INFEASIBLE


def test_redundant_equalities():
    lp = LinearProgram([1.0, 2.0], [[1, 1], [2, 2]], (EQ, EQ), [1.0, 2.0])
    sol = solve(lp)
    assert sol.objective_value == pytest.approx(2.0)


def test_malformed_lp():
    with pytest.raises(ConfigError):
        LinearProgram([1.0, 2.0], [[1.0]], (LE,), [1.0])
    with pytest.raises(ConfigError):
        LinearProgram([1.0], [[np.inf]], (LE,), [1.0])
    with pytest.raises(ConfigError):
        LinearProgram([1.0], [[1.0]], ("<",), [1.0])


def test_deterministic():
    rng = np.random.default_rng(5)
    lp = random_lp(rng, bounded_feasible=True)
    a, b = solve(lp), solve(lp)
    assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("bounded", [False, True])
def test_matches_vertex_enumeration(seed, bounded):
    rng = np.random.default_rng(1000 + seed)
    for _ in range(60):
        lp = random_lp(rng, bounded_feasible=bounded)
        sol = solve(lp)
        status, value, _ = enumerate_vertices(lp)
        assert sol.status is status
        if status is LpStatus.OPTIMAL:
            assert sol.objective_value == pytest.approx(value, abs=1e-8)
            assert np.all(lp.residuals(sol.values) <= 1e-8)
            assert np.all(sol.values >= -1e-10)


def test_matches_highs_on_bounded_cases():
    rng = np.random.default_rng(77)
    for _ in range(200):
        lp = random_lp(rng, bounded_feasible=True)
        ub = [k for k, s in enumerate(lp.senses) if s != EQ]
        eq = [k for k, s in enumerate(lp.senses) if s == EQ]
        sign = np.array([1.0 if lp.senses[k] == LE else -1.0 for k in ub])
        res = linprog(-lp.objective,
                      A_ub=(lp.constraint_matrix[ub] * sign[:, None]) if ub else None,
                      b_ub=(lp.rhs[ub] * sign) if ub else None,
                      A_eq=lp.constraint_matrix[eq] if eq else None,
                      b_eq=lp.rhs[eq] if eq else None, method="highs")
        assert res.status == 0
        assert solve(lp).objective_value == pytest.approx(-res.fun, abs=1e-7)


class TestBuilders:
    def one_resource(self, f, capacity):
        theta = (math.log(f / (1 - f)),) if f < 1 else (40.0,)
        return make_instance(revenues=(1.0,), capacities=(capacity,), thetas=[(theta,)],
                             features=((1.0,),), rates=(10.0,), horizon=10)

    def test_slack_capacity(self):
        inst = self.one_resource(0.5, 10.0)
        lp, index = build_optimistic_lp(inst, [inst.resources[0].thetas])
        sol = solve(lp)
        s = assignment(sol, index)
        assert s[0, 0] == pytest.approx(1.0)
        assert sol.objective_value == pytest.approx(5.0)
        assert sol.objective_value == pytest.approx(enumerate_vertices(lp)[1], abs=1e-8)

    def test_binding_capacity(self):
        inst = self.one_resource(1.0, 4.0)
        lp, index = build_optimistic_lp(inst, [inst.resources[0].thetas])
        sol = solve(lp)
        s = assignment(sol, index)
        assert s[0, 0] == pytest.approx(0.4)
        assert s[1, 0] == pytest.approx(0.6)
        assert sol.objective_value == pytest.approx(4.0)
        assert enumerate_vertices(lp)[1] == pytest.approx(4.0, abs=1e-8)

    def test_equality_rows_hold(self):
        inst = make_instance(thetas=[((2.0, 0.3), (1.0, -0.5))] * 2)
        lp, index = build_optimistic_lp(inst, [r.thetas for r in inst.resources])
        s = assignment(solve(lp), index)
        assert s.sum(axis=0) == pytest.approx(np.ones(2), abs=1e-12)
        fbar = optimistic_matrix(inst, [r.thetas for r in inst.resources])
        used = (fbar * np.asarray(inst.total_rates) * s[:2]).sum(axis=1)
        assert np.all(used <= inst.capacities + 1e-8)

    def test_shrinking_omega_cannot_raise_value(self):
        thetas = ((2.5, 0.4), (2.0, 0.0), (1.5, -0.4))
        inst = make_instance(thetas=[thetas] * 2)
        full = solve(build_optimistic_lp(inst, [np.array(thetas)] * 2)[0]).objective_value
        for keep in ([0, 1], [1, 2], [2], [1]):
            sub = solve(build_optimistic_lp(inst, [np.array(thetas)[keep]] * 2)[0]).objective_value
            assert sub <= full + 1e-9

    def test_param_lp_equals_singleton_optimistic_lp(self, iid_instance):
        theta = [r.thetas[r.true_theta] for r in iid_instance.resources]
        a, _ = build_param_lp(iid_instance, theta)
        b, _ = build_optimistic_lp(iid_instance, [t[None, :] for t in theta])
        assert np.array_equal(a.objective, b.objective)
        assert np.array_equal(a.constraint_matrix, b.constraint_matrix)

    def test_optimism_dominates(self):
        thetas = ((2.5, 0.4), (math.log(9), 0.0), (1.5, -0.4))
        inst = make_instance(thetas=[thetas] * 2, true_theta=1)
        param = solve(build_param_lp(inst, [np.array(thetas[1])] * 2)[0]).objective_value
        opt = solve(build_optimistic_lp(inst, [np.array(thetas)] * 2)[0]).objective_value
        assert opt >= param - 1e-9

    def test_param_lp_matches_oracle(self, iid_instance):
        lp, _ = build_param_lp(iid_instance, [r.thetas[0] for r in iid_instance.resources])
        assert solve(lp).objective_value == pytest.approx(enumerate_vertices(lp)[1], abs=1e-8)


class TestBenchmark:
    def test_iid_value(self, iid_instance):
        # resource 2 is saturated (1.5 * 250); the remaining 370 - 250 expected
        # purchases go to resource 1 at revenue 1
        assert benchmark_jd(iid_instance, iid_schedule(), 500) == pytest.approx(495.0, abs=1e-6)

    def test_iid_value_by_oracle(self, iid_instance):
        from kbsim.lp import _assignment_lp
        lp, _ = _assignment_lp(iid_instance, iid_instance.true_probs(), np.array([300.0, 200.0]),
                               True, False)
        assert enumerate_vertices(lp)[1] == pytest.approx(495.0, abs=1e-8)

    def test_no_arrivals_is_zero(self, iid_instance):
        assert benchmark_jd(iid_instance, iid_schedule(), 0) == 0.0
        sched = ArrivalSchedule(np.vstack([np.tile((0.0, 1.0), (250, 1)), np.tile((1.0, 0.0), (250, 1))]))
        inst = make_instance(thetas=[((math.log(9), 0.0),)] * 2, rates=(250.0, 250.0))
        assert benchmark_jd(inst, sched, 10) > 0

    def test_uncapacitated(self, iid_instance):
        big = iid_instance.with_capacities([1000.0, 1000.0])
        demand = np.array([300.0, 200.0])
        expected = float((demand * (big.revenues[:, None] * big.true_probs()).max(axis=0)).sum())
        assert benchmark_jd(big, iid_schedule(), 500) == pytest.approx(expected)
        assert expected == pytest.approx(555.0)

    def test_monotone_in_t_and_c(self, iid_instance):
        sched = ArrivalSchedule.from_segments([(0.33, (0.15, 0.85)), (0.67, (0.4, 0.6))], 500)
        inst = make_instance(rates=tuple(sched.total_rates()))
        prev = -1.0
        for t in range(0, 501, 25):
            v = benchmark_jd(inst, sched, t)
            assert v >= prev - 1e-9
            prev = v
        prev = -1.0
        for c in np.linspace(10, 600, 15):
            v = benchmark_jd(inst.with_capacities([c, c]), sched, 500)
            assert v >= prev - 1e-9
            prev = v

    def test_collapse_equals_per_period_lp(self):
        # per-period variables s_ij^s with sum_i s_ij^s = mu_j^s, solved by HiGHS
        T = 6
        rows = np.array([[0.9, 0.1], [0.2, 0.8], [0.5, 0.5], [1.0, 0.0], [0.3, 0.7], [0.6, 0.4]])
        sched = ArrivalSchedule(rows)
        inst = make_instance(capacities=(1.2, 0.8), rates=tuple(rows.sum(axis=0)), horizon=T)
        f = inst.true_probs()
        n, L = f.shape
        nv = (n + 1) * L * T

        def var(i, j, s):
            return (s * (n + 1) + i) * L + j
        c = np.zeros(nv)
        A_ub = np.zeros((n, nv))
        A_eq = np.zeros((L * T, nv))
        for s in range(T):
            for j in range(L):
                for i in range(n + 1):
                    if i < n:
                        c[var(i, j, s)] = -inst.revenues[i] * f[i, j]
                        A_ub[i, var(i, j, s)] = f[i, j]
                    A_eq[s * L + j, var(i, j, s)] = 1.0
        res = linprog(c, A_ub=A_ub, b_ub=inst.capacities, A_eq=A_eq, b_eq=rows.ravel(), method="highs")
        assert benchmark_jd(inst, sched, T) == pytest.approx(-res.fun, abs=1e-8)

    def test_period_out_of_range(self, iid_instance):
        with pytest.raises(ConfigError):
            benchmark_jd(iid_instance, iid_schedule(), 501)
