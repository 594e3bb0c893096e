import math

import numpy as np
import pytest

from kbsim.policies import (Decision, PolicyParams, PolicyState, alg_adv_step, alg_lp_step,
                            check_switch, ulwe_step, update_confidence)
from kbsim.model import ArrivalSchedule
from kbsim.simulator import SimulationConfig, run_episode

from conftest import make_instance


class FixedUniform:
    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def pinned_state(column, capacities=(250.0, 250.0)):
    """State whose cached LP assigns type 0 according to ``column``."""
    state = PolicyState(make_instance(capacities=capacities), PolicyParams(resolve_cadence=10**6))
    s = np.zeros((3, 2))
    s[:, 0] = column
    s[:, 1] = column
    state.lp_solution = s
    state._lp_generation = state.confidence.generation
    return state


class TestAlgLp:
    def test_degenerate_column(self):
        for u in (0.0, 0.3, 0.999999):
            d = alg_lp_step(pinned_state((1.0, 0.0, 0.0)), 0, FixedUniform(u))
            assert d.resource == 0

    def test_inverse_cdf(self):
        d = alg_lp_step(pinned_state((0.4, 0.6, 0.0)), 0, FixedUniform(0.5))
        assert d.resource == 1
        assert d.probabilities.sum() == pytest.approx(1.0)
        assert d.maximizer == 0

    def test_depleted_mass_goes_to_reject(self):
        state = pinned_state((0.4, 0.6, 0.0))
        state.consumption[0] = 250.0
        d = alg_lp_step(state, 0, FixedUniform(0.1))
        assert d.probabilities == pytest.approx([0.0, 0.6, 0.4])
        assert d.resource == 1
        rng = np.random.default_rng(0)
        picks = {alg_lp_step(state, 0, rng).resource for _ in range(2000)}
        assert picks == {1, 2}

    def test_sampling_frequencies(self):
        state = pinned_state((0.25, 0.6, 0.15))
        rng = np.random.default_rng(123)
        N = 100_000
        counts = np.bincount([alg_lp_step(state, 0, rng).resource for _ in range(N)], minlength=3)
        p = np.array([0.25, 0.6, 0.15])
        se = np.sqrt(p * (1 - p) / N)
        assert np.all(np.abs(counts / N - p) <= 3 * se)

    def test_resolves_from_lp(self):
        state = PolicyState(make_instance(), PolicyParams())
        d = alg_lp_step(state, 0, np.random.default_rng(0))
        assert state.lp_solution is not None
        assert state.lp_solution.sum(axis=0) == pytest.approx([1.0, 1.0])
        assert d.lp_column.sum() == pytest.approx(1.0)

    def test_cadence(self):
        state = PolicyState(make_instance(), PolicyParams(resolve_cadence=3))
        rng = np.random.default_rng(0)
        ages = []
        for _ in range(7):
            alg_lp_step(state, 0, rng)
            ages.append(state.lp_age)
        assert ages == [1, 2, 3, 1, 2, 3, 1]


class TestAlgAdv:
    def test_fresh_prefers_higher_revenue(self):
        d = alg_adv_step(PolicyState(make_instance()), 0)
        assert d.resource == 1

    def test_full_resource_scores_zero(self):
        state = PolicyState(make_instance())
        state.consumption[1] = 250
        assert alg_adv_step(state, 0).resource == 0

    def test_penalised_scores(self):
        thetas = [((math.log(9), 0.0),), ((0.0, 0.0),)]  # f = 0.9 and 0.5 for type 0
        state = PolicyState(make_instance(thetas=thetas))
        state.consumption[:] = 125
        s1 = 1.0 * (1 - 0.377541) * 0.9
        s2 = 1.5 * (1 - 0.377541) * 0.5
        assert (s1, s2) == pytest.approx((0.560213, 0.466844), abs=2e-6)
        assert alg_adv_step(state, 0).resource == 0

    def test_all_depleted_rejects(self):
        state = PolicyState(make_instance())
        state.consumption[:] = 250
        d = alg_adv_step(state, 0)
        assert d.resource == 2 and d.maximizer is None

    def test_ties_to_lower_index(self):
        state = PolicyState(make_instance(revenues=(1.0, 1.0)))
        assert alg_adv_step(state, 1).resource == 0


def removal_instance(thetas0, n_types_features=((1.0,),)):
    return make_instance(revenues=(1.0, 1.0), thetas=[thetas0, ((0.0,),)],
                         features=n_types_features, rates=(500.0,), horizon=500)


def offer(state, resource, maximizer, purchase):
    state.period += 1
    d = Decision(resource, np.eye(3)[resource], maximizer)
    return update_confidence(state, d, 0, purchase)


class TestUpdateConfidence:
    def test_no_early_removal(self):
        state = PolicyState(removal_instance(((math.log(9),), (0.0,))))
        for _ in range(3):
            assert not offer(state, 0, 0, 1)
        assert state.confidence.residual_sums[0][0] == pytest.approx(3 * (0.9 - 1))
        assert math.sqrt(3 * math.log(6 * 1000)) == pytest.approx(5.1, abs=0.05)
        assert state.confidence.d_sets[0] == {0: [1, 2, 3]}

    def test_removal_period_for_certain_prediction(self):
        n, T = 2, 500
        # brute force: first k with k > sqrt(k log(2k nT)), the residual sum being k
        k_expected = next(k for k in range(1, 10_000) if k > math.sqrt(k * math.log(2 * k * n * T)))
        assert k_expected == 10
        # two candidates that both predict ~1, so only the residual test can fire
        state = PolicyState(removal_instance(((40.0,), (39.0,))))
        removed_at = None
        for k in range(1, 50):
            if offer(state, 0, 0, 0):
                removed_at = k
                break
        assert removed_at == k_expected
        assert list(state.confidence.omega(0)) == [1]
        assert state.confidence.removals == [(10, 0, 0)]

    def test_gap_condition_removes_outlier(self):
        state = PolicyState(removal_instance(((40.0,), (-40.0,))))
        removed_at = None
        for k in range(1, 50):
            # purchases keep the residual at ~0, only the gap to theta=-40 grows
            if offer(state, 0, 0, 1):
                removed_at = k
                break
        assert removed_at == 10

    def test_last_candidate_is_kept(self, caplog):
        state = PolicyState(removal_instance(((40.0,),)))
        for _ in range(30):
            offer(state, 0, 0, 0)
        assert list(state.confidence.omega(0)) == [0]
        assert "misspecified" in caplog.text

    def test_reject_does_not_update(self):
        state = PolicyState(removal_instance(((0.0,),)))
        state.period = 1
        assert not update_confidence(state, Decision(2, np.eye(3)[2], None), 0, 0)
        assert state.confidence.d_sets[0] == {}

    def test_beta(self):
        assert PolicyState(make_instance()).beta == 1.0 / (2 * 500)


class TestSwitch:
    def test_first_period_never_switches(self):
        state = PolicyState(make_instance())
        d = alg_lp_step(state, 0, np.random.default_rng(0))
        assert not check_switch(state, 0, d)
        bound = 1.5 * math.sqrt(32 * 1 * math.log(4 * 2 * 1 * 1000))
        assert np.all(np.abs(state.monitor.cond1_sums) <= 1.5 < bound)

    def test_cond2_accumulates_planned_consumption(self):
        state = PolicyState(make_instance())
        d = alg_lp_step(state, 0, np.random.default_rng(0))
        check_switch(state, 0, d)
        fbar, _ = state.optimistic()
        assert state.monitor.cond2_sums == pytest.approx(d.lp_column[:2] * fbar[:, 0])

    def test_front_loaded_demand_triggers_switch(self):
        T = 2000
        rows = np.vstack([np.tile((1.0, 0.0), (T // 2, 1)), np.tile((0.0, 1.0), (T // 2, 1))])
        inst = make_instance(revenues=(1.0,), capacities=(0.2 * T,),
                             thetas=[((math.log(9), -5.0),)], rates=(T / 2, T / 2), horizon=T)
        cfg = SimulationConfig(inst, ArrivalSchedule(rows), policy="ulwe", resolve_cadence=1)
        trace, _ = run_episode(cfg)
        assert trace.switch_period is not None and trace.switch_period < T
        # the switch is one-way
        assert not trace.switched[: trace.switch_period - 1].any()
        assert trace.switched[trace.switch_period - 1:].all()


class TestUlwe:
    def test_unswitched_matches_lp(self):
        a, b = PolicyState(make_instance()), PolicyState(make_instance())
        ra, rb = np.random.default_rng(9), np.random.default_rng(9)
        for t in range(30):
            da, db = ulwe_step(a, t % 2, ra), alg_lp_step(b, t % 2, rb)
            assert da.resource == db.resource
            update_confidence(a, da, t % 2, 1)
            update_confidence(b, db, t % 2, 1)

    def test_switched_matches_adv(self):
        a, b = PolicyState(make_instance()), PolicyState(make_instance())
        a.monitor.switched = True
        a.consumption[:] = b.consumption[:] = (100, 200)
        rng = np.random.default_rng(0)
        for j in (0, 1, 0):
            assert ulwe_step(a, j, rng).resource == alg_adv_step(b, j).resource
