"""Domain types and the scalar primitives shared by every policy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .exceptions import ConfigError, DomainError, PolicyError

_E_MINUS_ONE = math.e - 1.0


@dataclass(frozen=True)
class Context:
    id: int
    features: tuple[float, ...]

    def __post_init__(self):
        feats = tuple(float(v) for v in self.features)
        if not all(math.isfinite(v) for v in feats):
            raise ConfigError(f"context {self.id}: non-finite features")
        object.__setattr__(self, "features", feats)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.features)


@dataclass(frozen=True)
class ResourceSpec:
    revenue: float
    capacity: float
    theta_space: tuple[tuple[float, ...], ...]
    true_theta: int = 0

    def __post_init__(self):
        if not self.revenue > 0:
            raise ConfigError("revenue must be positive")
        if not self.capacity > 0:
            raise ConfigError("capacity must be positive")
        space = tuple(tuple(float(v) for v in th) for th in self.theta_space)
        if not space:
            raise ConfigError("theta_space must be non-empty")
        if len({len(th) for th in space}) != 1:
            raise ConfigError("theta_space vectors differ in length")
        if not 0 <= self.true_theta < len(space):
            raise ConfigError(f"true_theta {self.true_theta} out of range")
        object.__setattr__(self, "theta_space", space)

    @property
    def thetas(self) -> np.ndarray:
        return np.asarray(self.theta_space)


@dataclass(frozen=True)
class ProblemInstance:
    """Static world: resources, customer types, horizon and total arrival rates."""

    resources: tuple[ResourceSpec, ...]
    contexts: tuple[Context, ...]
    horizon: int
    total_rates: tuple[float, ...]
    reject_arm_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "contexts", tuple(self.contexts))
        object.__setattr__(self, "total_rates", tuple(float(v) for v in self.total_rates))
        if not self.resources:
            raise ConfigError("need at least one resource")
        if not self.contexts:
            raise ConfigError("need at least one context")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError("horizon must be a positive integer")
        object.__setattr__(self, "horizon", int(self.horizon))
        ids = [c.id for c in self.contexts]
        if sorted(ids) != list(range(len(ids))):
            raise ConfigError("context ids must be 0..L-1 in order")
        if ids != list(range(len(ids))):
            raise ConfigError("contexts must be listed in id order")
        d = len(self.contexts[0].features)
        if any(len(c.features) != d for c in self.contexts):
            raise ConfigError("contexts have differing feature dimension")
        for i, res in enumerate(self.resources):
            if len(res.theta_space[0]) != d:
                raise ConfigError(f"resource {i}: theta dimension != feature dimension {d}")
        if len(self.total_rates) != len(self.contexts):
            raise ConfigError("total_rates length must equal number of contexts")
        if any(v < 0 for v in self.total_rates):
            raise ConfigError("total_rates must be nonnegative")
        if abs(sum(self.total_rates) - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ConfigError(
                f"total_rates sum to {sum(self.total_rates)}, expected horizon {self.horizon}"
            )

    @property
    def n(self) -> int:
        return len(self.resources)

    @property
    def n_types(self) -> int:
        return len(self.contexts)

    @property
    def dim(self) -> int:
        return len(self.contexts[0].features)

    @property
    def reject(self) -> int:
        """Index used for the virtual reject arm."""
        return len(self.resources)

    @property
    def revenues(self) -> np.ndarray:
        return np.array([r.revenue for r in self.resources])

    @property
    def capacities(self) -> np.ndarray:
        return np.array([r.capacity for r in self.resources])

    @property
    def features(self) -> np.ndarray:
        return np.array([c.features for c in self.contexts])

    def true_probs(self) -> np.ndarray:
        """(n, L) matrix of purchase probabilities under the true parameters."""
        X = self.features
        return np.array([
            sigmoid(X @ res.thetas[res.true_theta]) for res in self.resources
        ])

    def with_capacities(self, capacities: Sequence[float]) -> "ProblemInstance":
        if len(capacities) != self.n:
            raise ConfigError("one capacity per resource required")
        resources = tuple(
            ResourceSpec(r.revenue, float(c), r.theta_space, r.true_theta)
            for r, c in zip(self.resources, capacities)
        )
        return ProblemInstance(resources, self.contexts, self.horizon, self.total_rates,
                               self.reject_arm_enabled)

    def to_dict(self) -> dict:
        return {
            "resources": [
                {"revenue": r.revenue, "capacity": r.capacity,
                 "theta_space": [list(th) for th in r.theta_space],
                 "true_theta": r.true_theta}
                for r in self.resources
            ],
            "contexts": [{"id": c.id, "features": list(c.features)} for c in self.contexts],
            "horizon": self.horizon,
            "total_rates": list(self.total_rates),
            "reject_arm_enabled": self.reject_arm_enabled,
        }

    @classmethod
    def from_dict(cls, data: dict, total_rates=None) -> "ProblemInstance":
        known = {"resources", "contexts", "horizon", "total_rates", "reject_arm_enabled"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown instance keys: {sorted(unknown)}")
        try:
            resources = []
            for r in data["resources"]:
                extra = set(r) - {"revenue", "capacity", "theta_space", "true_theta"}
                if extra:
                    raise ConfigError(f"unknown resource keys: {sorted(extra)}")
                resources.append(ResourceSpec(float(r["revenue"]), float(r["capacity"]),
                                              r["theta_space"], int(r.get("true_theta", 0))))
            contexts = [Context(int(c["id"]), c["features"]) for c in data["contexts"]]
            rates = data.get("total_rates", total_rates)
            if rates is None:
                raise ConfigError("instance needs total_rates (or a schedule to derive them)")
            return cls(tuple(resources), tuple(contexts), data["horizon"], rates,
                       bool(data.get("reject_arm_enabled", True)))
        except KeyError as exc:
            raise ConfigError(f"instance is missing key {exc}") from None


@dataclass(frozen=True)
class ArrivalSchedule:
    """Per-period type probabilities; rows[t-1] is the distribution of period t."""

    rows: np.ndarray = field(repr=False)
    segments: tuple | None = None

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ConfigError("schedule rows must be a non-empty T x L array")
        if np.any(rows < 0) or np.any(rows > 1) or not np.all(np.isfinite(rows)):
            raise ConfigError("schedule entries must lie in [0, 1]")
        if np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-12):
            raise ConfigError("each schedule row must sum to 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_segments(cls, segments, horizon: int) -> "ArrivalSchedule":
        """Expand ``[(fraction, probs), ...]`` into per-period rows.

        Segment boundaries are ``round(cumulative fraction * horizon)``, with
        the last boundary pinned to ``horizon``.
        """
        segs = tuple((float(f), tuple(float(p) for p in probs)) for f, probs in segments)
        if not segs:
            raise ConfigError("need at least one segment")
        fracs = np.array([f for f, _ in segs])
        if np.any(fracs <= 0) or abs(fracs.sum() - 1.0) > 1e-9:
            raise ConfigError("segment fractions must be positive and sum to 1")
        bounds = np.rint(np.cumsum(fracs) * horizon).astype(int)
        bounds[-1] = horizon
        rows, start = [], 0
        for stop, (_, probs) in zip(bounds, segs):
            rows.extend([probs] * max(0, stop - start))
            start = max(start, stop)
        return cls(np.array(rows), segs)

    @property
    def horizon(self) -> int:
        return self.rows.shape[0]

    @property
    def n_types(self) -> int:
        return self.rows.shape[1]

    def total_rates(self) -> np.ndarray:
        return self.rows.sum(axis=0)

    def cumulative(self, t: int) -> np.ndarray:
        """Expected arrivals of each type over periods 1..t."""
        return self.rows[:t].sum(axis=0)

    def check_rates(self, instance: ProblemInstance) -> None:
        if self.horizon != instance.horizon:
            raise ConfigError(f"schedule has {self.horizon} rows, horizon is {instance.horizon}")
        if self.n_types != instance.n_types:
            raise ConfigError("schedule width differs from number of contexts")
        gap = np.abs(self.total_rates() - np.asarray(instance.total_rates))
        if np.any(gap > 1e-9):
            raise ConfigError(
                f"schedule implies rates {self.total_rates().tolist()}, "
                f"instance declares {list(instance.total_rates)}"
            )

    def to_dict(self) -> dict:
        if self.segments is not None:
            return {"segments": [{"fraction": f, "probs": list(p)} for f, p in self.segments]}
        return {"rows": self.rows.tolist()}

    @classmethod
    def from_dict(cls, data: dict, horizon: int) -> "ArrivalSchedule":
        if set(data) == {"rows"}:
            return cls(np.asarray(data["rows"], dtype=float))
        if set(data) == {"segments"}:
            try:
                segs = [(s["fraction"], s["probs"]) for s in data["segments"]]
            except (KeyError, TypeError):
                raise ConfigError("segments need 'fraction' and 'probs'") from None
            return cls.from_segments(segs, horizon)
        raise ConfigError("schedule needs exactly one of 'rows' or 'segments'")


def sigmoid(z):
    """Numerically stable logistic function, scalar or array."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def purchase_prob(context: Context | Sequence[float], theta: Sequence[float]) -> float:
    """Logistic purchase probability ``1 / (1 + exp(-theta . x))``."""
    x = np.asarray(context.features if isinstance(context, Context) else context, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != x.shape:
        raise ConfigError(f"theta has shape {theta.shape}, context has {x.shape}")
    return sigmoid(float(theta @ x))


def optimistic_prob(context: Context | Sequence[float], omega) -> tuple[float, np.ndarray]:
    """Largest purchase probability over ``omega`` and the parameter attaining it.

    ``omega`` must be ordered as in the resource's theta space; ties go to the
    earliest element.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.size == 0:
        raise PolicyError("confidence set is empty")
    if omega.ndim == 1:
        omega = omega[None, :]
    x = np.asarray(context.features if isinstance(context, Context) else context, dtype=float)
    if omega.shape[1] != x.shape[0]:
        raise ConfigError("theta dimension does not match context")
    probs = sigmoid(omega @ x)
    k = int(np.argmax(probs))
    return float(probs[k]), omega[k]


def psi(u: float) -> float:
    """Inventory penalty ``(e^u - 1) / (e - 1)`` on [0, 1]."""
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"psi is defined on [0, 1], got {u}")
    return math.expm1(u) / _E_MINUS_ONE


def fit_logistic_mle(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unpenalised logistic regression without intercept.

    Returns the MLE and per-coordinate standard errors from the observed
    Fisher information.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    def nll(w):
        z = X @ w
        return float(np.sum(np.logaddexp(0.0, z) - y * z))

    def grad(w):
        return X.T @ (sigmoid(X @ w) - y)

    res = minimize(nll, np.zeros(X.shape[1]), jac=grad, method="BFGS",
                   options={"gtol": 1e-10})
    w = res.x
    p = sigmoid(X @ w)
    info = X.T @ (X * (p * (1 - p))[:, None])
    se = np.sqrt(np.diag(np.linalg.pinv(info)))
    return w, se


def build_theta_space(contexts: Sequence[Context], true_theta, type_probs,
                      rng: np.random.Generator, n_history: int = 500,
                      points: int = 3, width: float = 1.0,
                      include_true: bool = True) -> tuple[tuple[tuple[float, ...], ...], int]:
    """Grid of candidate parameters around an MLE fitted on synthetic history.

    ``n_history`` past customers are drawn with ``type_probs`` and their
    purchases sampled under ``true_theta``. The grid has ``points`` values per
    coordinate spaced ``width`` standard errors apart and always contains the
    MLE (``points`` must be odd). Returns the space and the index of
    ``true_theta`` in it (appended when ``include_true``; -1 otherwise).
    """
    if points < 1 or points % 2 == 0:
        raise ConfigError("points must be a positive odd integer")
    X_types = np.array([c.features for c in contexts])
    types = rng.choice(len(contexts), size=n_history, p=np.asarray(type_probs))
    X = X_types[types]
    y = (rng.random(n_history) < sigmoid(X @ np.asarray(true_theta, dtype=float))).astype(float)
    mle, se = fit_logistic_mle(X, y)
    half = points // 2
    offsets = np.arange(-half, half + 1) * width
    axes = [mle[k] + offsets * se[k] for k in range(len(mle))]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(mle), -1).T
    space = [tuple(float(v) for v in th) for th in grid]
    true_idx = -1
    if include_true:
        tt = tuple(float(v) for v in true_theta)
        for k, th in enumerate(space):
            if np.allclose(th, tt, atol=1e-12, rtol=0):
                true_idx = k
                break
        else:
            space.append(tt)
            true_idx = len(space) - 1
    return tuple(space), true_idx
