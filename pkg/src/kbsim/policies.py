"""ALG_LP, ALG_ADV and the unified switching policy as explicit state machines.

All per-period work reads precomputed probability tables: a resource's
candidate parameters are finite and so are the customer types, so
``f_i(x_j, theta_k)`` is tabulated once per episode.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, PolicyError
from .lp import assignment, lp_from_probs, solve
from .model import Context, ProblemInstance, psi, sigmoid

log = logging.getLogger(__name__)

POLICIES = ("alg_lp", "alg_adv", "ulwe")
CAPACITY_MODES = ("hard", "soft")
THETA_COUNTS = ("sum", "max")


@dataclass(frozen=True)
class PolicyParams:
    resolve_cadence: int = 1
    capacity_mode: str = "hard"
    threshold_multiplier: float = 1.0
    switch_threshold_multiplier: float = 1.0
    theta_count: str = "sum"

    def __post_init__(self):
        if int(self.resolve_cadence) != self.resolve_cadence or self.resolve_cadence < 1:
            raise ConfigError("resolve_cadence must be a positive integer")
        if self.capacity_mode not in CAPACITY_MODES:
            raise ConfigError(f"capacity_mode must be one of {CAPACITY_MODES}")
        if self.theta_count not in THETA_COUNTS:
            raise ConfigError(f"theta_count must be one of {THETA_COUNTS}")
        if not (self.threshold_multiplier > 0 and self.switch_threshold_multiplier > 0):
            raise ConfigError("threshold multipliers must be positive")


@dataclass
class ConfidenceState:
    """Surviving parameters per resource and the sums behind the removal test.

    ``residual_sums[i][k]`` accumulates ``f - a`` over the periods where
    resource i was offered with maximizer k; ``gap_sums[i][k, m]``
    accumulates ``f(., k) - f(., m)`` over the same periods.
    """

    alive: list[np.ndarray]
    d_sets: list[dict[int, list[int]]]
    residual_sums: list[np.ndarray]
    gap_sums: list[np.ndarray]
    beta: float
    generation: int = 0
    removals: list[tuple[int, int, int]] = field(default_factory=list)

    @classmethod
    def initial(cls, sizes: list[int], beta: float) -> "ConfidenceState":
        return cls(
            alive=[np.ones(k, dtype=bool) for k in sizes],
            d_sets=[{} for _ in sizes],
            residual_sums=[np.zeros(k) for k in sizes],
            gap_sums=[np.zeros((k, k)) for k in sizes],
            beta=beta,
        )

    def omega(self, i: int) -> np.ndarray:
        """Indices (into resource i's theta space) still in the confidence set."""
        return np.flatnonzero(self.alive[i])


@dataclass
class SwitchMonitor:
    switched: bool
    switch_period: int | None
    cond1_sums: np.ndarray
    cond2_sums: np.ndarray
    param_lp_cache: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Decision:
    resource: int
    probabilities: np.ndarray
    maximizer: int | None
    lp_column: np.ndarray | None = None


class _Tables:
    """Probability tables for one instance."""

    def __init__(self, instance: ProblemInstance):
        X = instance.features
        self.f = [sigmoid(res.thetas @ X.T) for res in instance.resources]
        self.true = instance.true_probs()
        # distinct parameter vectors across resources, and where each one lives
        universe: list[tuple[float, ...]] = []
        pos: dict[tuple[float, ...], int] = {}
        for res in instance.resources:
            for th in res.theta_space:
                if th not in pos:
                    pos[th] = len(universe)
                    universe.append(th)
        self.universe = np.array(universe)
        self.member = np.full((instance.n, len(universe)), -1, dtype=int)
        for i, res in enumerate(instance.resources):
            for k, th in enumerate(res.theta_space):
                self.member[i, pos[th]] = k
        self.f_universe = sigmoid(self.universe @ X.T)  # (U, L), family shared by all resources
        self.shared = bool(np.all(self.member >= 0))


class PolicyState:
    """Mutable per-episode state shared by all three policies."""

    def __init__(self, instance: ProblemInstance, params: PolicyParams | None = None):
        self.instance = instance
        self.params = params or PolicyParams()
        self.tables = _Tables(instance)
        n, T = instance.n, instance.horizon
        self.confidence = ConfidenceState.initial(
            [len(r.theta_space) for r in instance.resources], 1.0 / (n * T))
        self.monitor = SwitchMonitor(False, None, np.zeros(len(self.tables.universe)), np.zeros(n))
        self.consumption = np.zeros(n)
        self.period = 0
        self.lp_solution: np.ndarray | None = None
        self.lp_age = 0
        self._lp_generation = -1
        self._fbar_cache: tuple[int, np.ndarray, np.ndarray] | None = None

    @property
    def beta(self) -> float:
        return self.confidence.beta

    def optimistic(self) -> tuple[np.ndarray, np.ndarray]:
        """(n, L) optimistic probabilities and (n, L) maximizer indices for the current sets."""
        gen = self.confidence.generation
        if self._fbar_cache is None or self._fbar_cache[0] != gen:
            n, L = self.instance.n, self.instance.n_types
            fbar = np.empty((n, L))
            arg = np.empty((n, L), dtype=int)
            for i in range(n):
                idx = self.confidence.omega(i)
                if idx.size == 0:
                    raise PolicyError(f"confidence set of resource {i} is empty")
                sub = self.tables.f[i][idx]
                best = sub.argmax(axis=0)  # first maximum, i.e. lowest theta index
                arg[i] = idx[best]
                fbar[i] = sub[best, np.arange(L)]
            self._fbar_cache = (gen, fbar, arg)
        return self._fbar_cache[1], self._fbar_cache[2]

    def depleted(self) -> np.ndarray:
        """Resources that cannot absorb another purchase."""
        return self.consumption + 1.0 > self.instance.capacities + 1e-9

    def theta_true_alive(self) -> bool:
        return all(self.confidence.alive[i][r.true_theta]
                   for i, r in enumerate(self.instance.resources))


def _type_id(context) -> int:
    return context.id if isinstance(context, Context) else int(context)


def _confidence_radius(t: int, beta: float) -> float:
    return math.sqrt(t * math.log(2 * t / beta))


def _lp_decide(state: PolicyState, j: int, rng: np.random.Generator) -> Decision:
    inst = state.instance
    n = inst.n
    if state.lp_solution is None or state.lp_age >= state.params.resolve_cadence:
        gen = state.confidence.generation
        if state.lp_solution is None or gen != state._lp_generation:
            fbar, _ = state.optimistic()
            lp, index = lp_from_probs(inst, fbar)
            sol = solve(lp)
            if not sol.optimal:
                raise PolicyError(f"optimistic LP is {sol.status.value}")
            s = np.zeros((n + 1, inst.n_types))
            s[: index.shape[0]] = assignment(sol, index)
            state.lp_solution = s
            state._lp_generation = gen
        state.lp_age = 0
    column = state.lp_solution[:, j]
    probs = np.clip(column, 0.0, None)
    if state.params.capacity_mode == "hard":
        gone = np.append(state.depleted(), False)
        probs[n] += probs[gone].sum()
        probs[gone] = 0.0
    probs = probs / probs.sum()
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    k = min(k, int(np.flatnonzero(probs > 0)[-1]))
    state.lp_age += 1
    _, arg = state.optimistic()
    return Decision(k, probs, int(arg[k, j]) if k < n else None, column.copy())


def _adv_decide(state: PolicyState, j: int) -> Decision:
    inst = state.instance
    n = inst.n
    fbar, arg = state.optimistic()
    used = np.minimum(state.consumption / inst.capacities, 1.0)
    scores = inst.revenues * np.array([1.0 - psi(float(u)) for u in used]) * fbar[:, j]
    if state.params.capacity_mode == "hard":
        scores = np.where(state.depleted(), -np.inf, scores)
    best = int(np.argmax(scores))
    k = best if scores[best] > 0 else n
    probs = np.zeros(n + 1)
    probs[k] = 1.0
    return Decision(k, probs, int(arg[k, j]) if k < n else None)


def alg_lp_step(state: PolicyState, context, rng: np.random.Generator) -> Decision:
    """Sample a resource from the optimistic LP's column for this customer type."""
    state.period += 1
    return _lp_decide(state, _type_id(context), rng)


def alg_adv_step(state: PolicyState, context, rng: np.random.Generator | None = None) -> Decision:
    """Greedy on penalty-discounted revenue times optimistic probability."""
    state.period += 1
    return _adv_decide(state, _type_id(context))


def update_confidence(state: PolicyState, decision: Decision, context, purchase: int) -> bool:
    """Fold this period's outcome into the sums; drop the maximizer if a bound is crossed.

    Returns True when a parameter was removed.
    """
    if decision.resource >= state.instance.n or decision.maximizer is None:
        return False
    conf = state.confidence
    t = state.period
    i, k, j = decision.resource, decision.maximizer, _type_id(context)
    if not conf.alive[i][k]:
        raise PolicyError(f"maximizer {k} of resource {i} is not in the confidence set")
    f = state.tables.f[i][:, j]
    conf.d_sets[i].setdefault(k, []).append(t)
    conf.residual_sums[i][k] += f[k] - purchase
    conf.gap_sums[i][k] += f[k] - f
    radius = state.params.threshold_multiplier * _confidence_radius(t, conf.beta)
    violated = abs(conf.residual_sums[i][k]) > radius or bool(
        np.any(np.abs(conf.gap_sums[i][k][conf.alive[i]]) > radius))
    if not violated:
        return False
    if conf.alive[i].sum() <= 1:
        log.warning("resource %d: last candidate parameter fails its bound at t=%d; "
                    "keeping it (model likely misspecified)", i, t)
        return False
    conf.alive[i][k] = False
    conf.generation += 1
    conf.removals.append((t, i, k))
    return True


def _param_tables(state: PolicyState) -> tuple[np.ndarray, np.ndarray]:
    """Assignments s(theta) and coefficients f(., theta) for every candidate theta.

    Resources whose theta space lacks a candidate keep their optimistic
    coefficients, so the cache depends on the confidence sets only then.
    """
    tab = state.tables
    key = "shared" if tab.shared else state.confidence.generation
    cache = state.monitor.param_lp_cache
    if key not in cache:
        if not tab.shared:
            cache.clear()
        inst = state.instance
        n, L = inst.n, inst.n_types
        fbar = state.optimistic()[0] if not tab.shared else None
        U = len(tab.universe)
        S = np.zeros((U, n + 1, L))
        F = np.empty((U, n, L))
        for u in range(U):
            for i in range(n):
                F[u, i] = tab.f_universe[u] if tab.member[i, u] >= 0 else fbar[i]
            lp, index = lp_from_probs(inst, F[u])
            sol = solve(lp)
            if not sol.optimal:
                raise PolicyError(f"parameter LP is {sol.status.value}")
            S[u, : index.shape[0]] = assignment(sol, index)
        cache[key] = (S, F)
    return cache[key]


def check_switch(state: PolicyState, context, decision: Decision) -> bool:
    """Accumulate the regret-pace and capacity-pace sums; True means switch now.

    Must run before ``update_confidence`` for the same period so that the
    optimistic values are those of the previous period's sets.
    """
    mon = state.monitor
    if mon.switched:
        return True
    inst = state.instance
    n, T, t = inst.n, inst.horizon, state.period
    j = _type_id(context)
    S, F = _param_tables(state)
    fbar, _ = state.optimistic()
    sbar = decision.lp_column[:n]
    r = inst.revenues
    mon.cond1_sums += ((S[:, :n, j] - sbar) * F[:, :, j] * r).sum(axis=1)
    mon.cond2_sums += sbar * fbar[:, j]

    tab = state.tables
    alive_u = np.zeros(len(tab.universe), dtype=bool)
    for i in range(n):
        m = tab.member[i]
        has = m >= 0
        alive_u[has] |= state.confidence.alive[i][m[has]]
    sizes = [len(res.theta_space) for res in inst.resources]
    n_theta = sum(sizes) if state.params.theta_count == "sum" else max(sizes)
    mult = state.params.switch_threshold_multiplier
    beta = state.beta
    bound1 = mult * r.max() * math.sqrt(32 * t * math.log(4 * n_theta * t / beta))
    bound2 = t / T * inst.capacities + mult * math.sqrt(2 * t * math.log(2 * t / beta))
    if np.any(np.abs(mon.cond1_sums[alive_u]) > bound1) or np.any(mon.cond2_sums > bound2):
        mon.switched = True
        mon.switch_period = t
    return mon.switched


def ulwe_step(state: PolicyState, context, rng: np.random.Generator) -> Decision:
    """LP sampling with a one-way switch to the greedy rule.

    A switch detected in period t takes effect from period t + 1.
    """
    state.period += 1
    j = _type_id(context)
    if state.monitor.switched:
        return _adv_decide(state, j)
    decision = _lp_decide(state, j, rng)
    check_switch(state, j, decision)
    return decision


STEPS = {"alg_lp": alg_lp_step, "alg_adv": alg_adv_step, "ulwe": ulwe_step}
