"""Episode driver, regret accounting and the experiment presets.

Randomness: replication ``k`` seeds ``numpy.random.SeedSequence(base_seed + k)``
and spawns three PCG64 streams, used for arrivals, purchases and policy
sampling respectively. Arrivals and purchases each consume exactly one
uniform per period whatever the policy does, so different policies see the
same customers and the same purchase coin flips.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigError
from .lp import benchmark_jd
from .model import ArrivalSchedule, Context, ProblemInstance, ResourceSpec, build_theta_space
from .policies import (CAPACITY_MODES, POLICIES, STEPS, PolicyParams, PolicyState,
                       update_confidence)

PRESET_SEGMENTS = {
    "iid": ((1.0, (0.6, 0.4)),),
    "adv1": ((0.33, (0.15, 0.85)), (0.67, (0.4, 0.6))),
    "adv2": (
        (0.1, (0.2, 0.8)),
        (0.3, (0.8, 0.2)),
        (0.2, (0.2, 0.8)),
        (0.1, (0.4, 0.6)),
        (0.1, (0.2, 0.8)),
        (0.1, (0.02, 0.98)),
        (0.1, (0.2, 0.8)),
    ),
}
PRESET_REVENUES = (1.0, 1.5)
PRESET_TRUE_THETA = (math.log(9.0), 0.0)  # purchase prob 0.9 for type A, 0.5 for type B
PRESET_FEATURES = ((1.0, 0.0), (0.0, 1.0))
PRESET_HISTORY_MIX = (0.6, 0.4)
PRESET_THETA_SEED = 20240
CAPACITY_READINGS = ("split", "each")


def default_checkpoints(horizon: int) -> tuple[int, ...]:
    step = 100 if horizon >= 100 else horizon
    return tuple(sorted(set(range(step, horizon + 1, step)) | {horizon}))


def preset_instance(horizon: int = 500, capacity_reading: str = "split",
                    theta_seed: int = PRESET_THETA_SEED, grid_points: int = 3,
                    grid_width: float = 1.0, n_history: int = 500,
                    total_rates=None) -> ProblemInstance:
    """Two resources, two customer types, logistic purchase model.

    ``capacity_reading="split"`` gives each resource ``horizon / 2``;
    ``"each"`` gives each resource ``horizon``. Both resources share one
    candidate grid fitted on ``n_history`` synthetic past customers.
    """
    if capacity_reading not in CAPACITY_READINGS:
        raise ConfigError(f"capacity_reading must be one of {CAPACITY_READINGS}")
    contexts = tuple(Context(l, f) for l, f in enumerate(PRESET_FEATURES))
    space, true_idx = build_theta_space(
        contexts, PRESET_TRUE_THETA, PRESET_HISTORY_MIX, np.random.default_rng(theta_seed),
        n_history=n_history, points=grid_points, width=grid_width)
    cap = horizon / 2 if capacity_reading == "split" else float(horizon)
    resources = tuple(ResourceSpec(r, cap, space, true_idx) for r in PRESET_REVENUES)
    if total_rates is None:
        total_rates = (0.6 * horizon, 0.4 * horizon)
    return ProblemInstance(resources, contexts, horizon, total_rates)


def preset_schedule(name: str, horizon: int) -> ArrivalSchedule:
    try:
        segments = PRESET_SEGMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESET_SEGMENTS)}") from None
    return ArrivalSchedule.from_segments(segments, horizon)


@dataclass(frozen=True)
class SimulationConfig:
    instance: ProblemInstance
    schedule: ArrivalSchedule
    policy: str = "ulwe"
    replications: int = 1
    base_seed: int = 0
    checkpoints: tuple[int, ...] | None = None
    resolve_cadence: int = 1
    capacity_mode: str = "hard"
    threshold_multiplier: float = 1.0
    switch_threshold_multiplier: float = 1.0
    theta_count: str = "sum"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError("replications must be a positive integer")
        if self.capacity_mode not in CAPACITY_MODES:
            raise ConfigError(f"capacity_mode must be one of {CAPACITY_MODES}")
        self.schedule.check_rates(self.instance)
        T = self.instance.horizon
        cps = default_checkpoints(T) if self.checkpoints is None else tuple(int(c) for c in self.checkpoints)
        if not cps or list(cps) != sorted(set(cps)) or cps[0] < 1 or cps[-1] > T:
            raise ConfigError(f"checkpoints must be sorted, distinct and within [1, {T}]")
        object.__setattr__(self, "checkpoints", cps)
        self.params  # validates the policy parameters

    @property
    def params(self) -> PolicyParams:
        return PolicyParams(self.resolve_cadence, self.capacity_mode, self.threshold_multiplier,
                            self.switch_threshold_multiplier, self.theta_count)

    @classmethod
    def preset(cls, name: str, policy: str = "ulwe", horizon: int = 500,
               capacity_reading: str = "split", **overrides) -> "SimulationConfig":
        schedule = preset_schedule(name, horizon)
        instance = preset_instance(horizon, capacity_reading,
                                   total_rates=tuple(schedule.total_rates()))
        kwargs = dict(policy=policy, replications=100, resolve_cadence=50)
        kwargs.update(overrides)
        return cls(instance, schedule, **kwargs)


@dataclass
class EpisodeTrace:
    """Column-wise record of one episode; index t-1 holds period t."""

    context: np.ndarray
    resource: np.ndarray
    maximizer: np.ndarray
    purchase: np.ndarray
    reward: np.ndarray
    remaining: np.ndarray
    switched: np.ndarray
    n_resources: int
    switch_period: int | None = None
    removals: list = field(default_factory=list)
    true_theta_removed: bool = False
    violations: np.ndarray | None = None

    @property
    def revenue(self) -> float:
        return float(self.reward.sum())

    @property
    def consumption(self) -> np.ndarray:
        out = np.zeros(self.n_resources)
        sold = self.resource < self.n_resources
        np.add.at(out, self.resource[sold], self.purchase[sold])
        return out

    def allocations(self, t: int, n_types: int) -> np.ndarray:
        """(L, n+1) counts of type-j customers offered resource i in periods 1..t."""
        out = np.zeros((n_types, self.n_resources + 1))
        np.add.at(out, (self.context[:t], self.resource[:t]), 1)
        return out


@dataclass
class RegretTrace:
    checkpoints: np.ndarray
    benchmark: np.ndarray
    revenue: np.ndarray

    @property
    def regret(self) -> np.ndarray:
        return self.benchmark - self.revenue


def draw_arrival(schedule: ArrivalSchedule, t: int, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of the customer type for period ``t`` (1-based)."""
    row = schedule.rows[t - 1]
    k = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    return min(k, int(np.flatnonzero(row > 0)[-1]))


def benchmark_curve(config: SimulationConfig) -> np.ndarray:
    return np.array([benchmark_jd(config.instance, config.schedule, t) for t in config.checkpoints])


def episode_streams(base_seed: int, index: int) -> tuple[np.random.Generator, ...]:
    seqs = np.random.SeedSequence(base_seed + index).spawn(3)
    return tuple(np.random.Generator(np.random.PCG64(s)) for s in seqs)


def run_episode(config: SimulationConfig, index: int = 0,
                benchmark: np.ndarray | None = None) -> tuple[EpisodeTrace, RegretTrace]:
    inst = config.instance
    T, n = inst.horizon, inst.n
    rng_arrival, rng_purchase, rng_policy = episode_streams(config.base_seed, index)
    state = PolicyState(inst, config.params)
    step = STEPS[config.policy]
    truth = state.tables.true
    revenues = inst.revenues
    caps = inst.capacities
    soft = config.capacity_mode == "soft"

    ctx = np.empty(T, dtype=int)
    res = np.empty(T, dtype=int)
    arg = np.full(T, -1, dtype=int)
    buy = np.zeros(T, dtype=int)
    reward = np.zeros(T)
    remaining = np.empty((T, n))
    switched = np.zeros(T, dtype=bool)
    violations = np.zeros(n)

    for t in range(1, T + 1):
        j = draw_arrival(config.schedule, t, rng_arrival)
        decision = step(state, j, rng_policy)
        u = rng_purchase.random()
        i = decision.resource
        a = int(i < n and u < truth[i, j])
        if a:
            if state.consumption[i] + 1 <= caps[i] + 1e-9:
                reward[t - 1] = revenues[i]
            elif soft:
                violations[i] += 1
            state.consumption[i] += 1
        update_confidence(state, decision, j, a)
        ctx[t - 1], res[t - 1], buy[t - 1] = j, i, a
        if decision.maximizer is not None:
            arg[t - 1] = decision.maximizer
        remaining[t - 1] = caps - state.consumption
        switched[t - 1] = state.monitor.switched

    trace = EpisodeTrace(
        ctx, res, arg, buy, reward, remaining, switched, n,
        switch_period=state.monitor.switch_period,
        removals=list(state.confidence.removals),
        true_theta_removed=not state.theta_true_alive(),
        violations=violations,
    )
    if benchmark is None:
        benchmark = benchmark_curve(config)
    cps = np.asarray(config.checkpoints)
    cum = np.cumsum(reward)
    return trace, RegretTrace(cps, np.asarray(benchmark, dtype=float), cum[cps - 1])


@dataclass
class Summary:
    """Replication averages for one policy."""

    policy: str
    checkpoints: np.ndarray
    benchmark: np.ndarray
    regrets: np.ndarray        # (R, C)
    allocations: np.ndarray    # (R, C, L, n+1)
    switch_periods: list
    theta_removed: np.ndarray  # (R,) bool

    @property
    def replications(self) -> int:
        return self.regrets.shape[0]

    @property
    def mean_regret(self) -> np.ndarray:
        return self.regrets.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        if self.replications < 2:
            return np.zeros(self.regrets.shape[1])
        return self.regrets.std(axis=0, ddof=1) / math.sqrt(self.replications)

    @property
    def mean_allocations(self) -> np.ndarray:
        return self.allocations.mean(axis=0)

    @property
    def switch_rate(self) -> float:
        return sum(p is not None for p in self.switch_periods) / self.replications

    @property
    def median_switch_period(self) -> float | None:
        """Median over replications, counting runs without a switch as T + 1."""
        if not any(p is not None for p in self.switch_periods):
            return None
        horizon = int(self.checkpoints[-1])
        return float(np.median([horizon + 1 if p is None else p for p in self.switch_periods]))

    @property
    def theta_removed_rate(self) -> float:
        return float(self.theta_removed.mean())


def _one(args):
    config, index, bench = args
    trace, regret = run_episode(config, index, bench)
    L = config.instance.n_types
    allocs = np.stack([trace.allocations(int(t), L) for t in config.checkpoints])
    return regret.regret, allocs, trace.switch_period, trace.true_theta_removed


def worker_count(replications: int) -> int:
    raw = os.environ.get("KBSIM_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"KBSIM_THREADS must be an integer, got {raw!r}") from None
    if cap < 0:
        raise ConfigError("KBSIM_THREADS must be >= 0")
    if cap == 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, replications))


def replicate(config: SimulationConfig) -> Summary:
    """Run ``config.replications`` episodes (seeds ``base_seed + k``) and average them."""
    bench = benchmark_curve(config)
    jobs = [(config, k, bench) for k in range(config.replications)]
    workers = worker_count(config.replications)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one, jobs))  # map preserves replication order
    else:
        results = [_one(job) for job in jobs]
    return Summary(
        policy=config.policy,
        checkpoints=np.asarray(config.checkpoints),
        benchmark=bench,
        regrets=np.stack([r[0] for r in results]),
        allocations=np.stack([r[1] for r in results]),
        switch_periods=[r[2] for r in results],
        theta_removed=np.array([r[3] for r in results]),
    )


def with_policy(config: SimulationConfig, policy: str) -> SimulationConfig:
    return replace(config, policy=policy)
