"""Seeded Monte Carlo estimates of discounted cost under a decision rule.

The arrival at step ``n`` of replication ``r`` is drawn from a Philox
counter-based stream keyed by ``(seed, r)``, so every replication can be
recomputed on its own and results do not depend on chunking or threads.
Policies compared with the same seed see the same arrivals (common random
numbers).
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ArrivalDistribution, CostFunction, ModelError, as_state, total
from .policies import ThresholdRangeError, as_policy
from .solver import horizon_for, tail_bound


@dataclass(frozen=True)
class SimConfig:
    gamma: float
    mu: ArrivalDistribution
    cost: CostFunction
    x0: tuple[int, int, int, int]
    horizon: int
    replications: int
    seed: int
    policy: object = "match_nothing"
    policy_name: str | None = None

    def __post_init__(self):
        if not isinstance(self.mu, ArrivalDistribution):
            object.__setattr__(self, "mu", ArrivalDistribution(tuple(self.mu)))
        if not isinstance(self.cost, CostFunction):
            object.__setattr__(self, "cost", CostFunction(tuple(self.cost)))
        object.__setattr__(self, "x0", as_state(self.x0))
        problems = []
        if not 0.0 < self.gamma < 1.0:
            problems.append(f"0 < gamma < 1 fails (gamma = {self.gamma})")
        if int(self.horizon) != self.horizon or self.horizon < 0:
            problems.append(f"horizon >= 0 fails (H = {self.horizon})")
        if int(self.replications) != self.replications or self.replications < 1:
            problems.append(f"replications >= 1 fails (R = {self.replications})")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            problems.append(f"seed must be an integer in [0, 2^64), got {self.seed}")
        if problems:
            raise ModelError("; ".join(problems))
        if self.policy_name is None:
            p = self.policy
            name = p if isinstance(p, str) else getattr(p, "name", type(p).__name__)
            object.__setattr__(self, "policy_name", str(name))

    @property
    def tail(self) -> float:
        return tail_bound(self.cost.max_coefficient, self.gamma, total(self.x0), self.horizon)

    def model_key(self):
        return (self.gamma, self.mu.mu, self.cost.c, self.x0, self.horizon,
                self.replications, self.seed)

    def replace(self, **changes) -> "SimConfig":
        params = {f: getattr(self, f) for f in self.__dataclass_fields__}
        params.update(changes)
        if "policy" in changes and "policy_name" not in changes:
            params["policy_name"] = None
        return SimConfig(**params)


def sim_horizon_for(cost: CostFunction, gamma: float, x0, target: float) -> int:
    """Smallest horizon whose truncation tail from ``x0`` is at most ``target``."""
    return horizon_for(cost.max_coefficient, gamma, total(x0), target)


@dataclass
class Estimate:
    policy: str
    mean: float
    se: float
    replications: int
    eps_tail: float
    horizon: int
    seed: int
    samples: np.ndarray | None = field(default=None, repr=False)

    def interval(self, k: float = 3.0) -> tuple[float, float]:
        half = k * self.se + self.eps_tail
        return self.mean - half, self.mean + half

    def covers(self, value: float, extra: float = 0.0, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.se + self.eps_tail + extra


def _uniforms(seed: int, reps: np.ndarray, horizon: int) -> np.ndarray:
    U = np.empty((len(reps), horizon))
    for row, r in enumerate(reps):
        gen = np.random.Generator(np.random.Philox(key=np.array([seed, int(r)], dtype=np.uint64)))
        U[row] = gen.random(horizon)
    return U


def _class_edges(mu: ArrivalDistribution) -> np.ndarray:
    edges = np.cumsum(mu.mu)
    last = max(mu.support)
    edges[last:] = 2.0  # absorbs rounding in the cumulative sum
    return edges


def simulate_batch(cfg: SimConfig, reps) -> np.ndarray:
    """Discounted cost samples ``sum_{n<=H} gamma^n c(X_n)`` for the given replication indices."""
    reps = np.asarray(reps, dtype=np.int64).ravel()
    policy = as_policy(cfg.policy)
    H = int(cfg.horizon)
    U = _uniforms(int(cfg.seed), reps, H)
    classes = np.searchsorted(_class_edges(cfg.mu), U, side="right")
    X = np.tile(np.asarray(cfg.x0, dtype=np.int64), (len(reps), 1))
    acc = cfg.cost.evaluate(X)
    disc = 1.0
    for n in range(H):
        try:
            m = policy.actions(X)
        except ThresholdRangeError as err:
            raise ThresholdRangeError(err.index, err.state, step=n) from None
        a, b, c = m[:, 0], m[:, 1], m[:, 2]
        post = X - np.stack([a, a + b, b + c, c], axis=1)
        if (post < 0).any():
            k = int(np.flatnonzero((post < 0).any(axis=1))[0])
            raise ModelError(f"policy {cfg.policy_name} returned infeasible matching "
                             f"{tuple(m[k])} at state {tuple(X[k])} (step {n})")
        post[np.arange(len(reps)), classes[:, n]] += 1
        X = post
        disc *= cfg.gamma
        acc = acc + disc * cfg.cost.evaluate(X)
    return acc


def simulate_trajectory(cfg: SimConfig, r: int) -> float:
    return float(simulate_batch(cfg, [r])[0])


def _run(cfg: SimConfig, threads: int = 1, chunk: int = 20_000) -> np.ndarray:
    R = int(cfg.replications)
    bounds = list(range(0, R, chunk)) + [R]
    pieces = [np.arange(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda reps: simulate_batch(cfg, reps), pieces))
    else:
        parts = [simulate_batch(cfg, reps) for reps in pieces]
    return np.concatenate(parts)


def summarize(samples: np.ndarray) -> tuple[float, float]:
    """Mean and standard error, summed in replication order with ``math.fsum``."""
    R = len(samples)
    mean = math.fsum(samples.tolist()) / R
    if R < 2:
        return mean, math.inf
    var = math.fsum(((samples - mean) ** 2).tolist()) / (R - 1)
    return mean, math.sqrt(var / R)


def estimate_cost(cfg: SimConfig, threads: int = 1, keep_samples: bool = False) -> Estimate:
    samples = _run(cfg, threads)
    mean, se = summarize(samples)
    return Estimate(cfg.policy_name, mean, se, int(cfg.replications), cfg.tail,
                    int(cfg.horizon), int(cfg.seed), samples if keep_samples else None)


def compare_policies(cfgs, threads: int = 1, keep_samples: bool = False) -> list[Estimate]:
    """One estimate per config, all on the same arrival streams, ranked by mean."""
    cfgs = list(cfgs)
    if not cfgs:
        return []
    key = cfgs[0].model_key()
    for cfg in cfgs[1:]:
        if cfg.model_key() != key:
            raise ModelError(f"policy {cfg.policy_name} does not share the model, horizon, "
                             "replication count and seed of the first config")
    names = [cfg.policy_name for cfg in cfgs]
    if len(set(names)) != len(names):
        raise ModelError(f"policy names must be distinct, got {names}")
    ests = [estimate_cost(cfg, threads, keep_samples) for cfg in cfgs]
    return sorted(ests, key=lambda e: (e.mean, e.policy))


def estimates_to_csv(ests, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "mean", "se", "eps_tail", "R", "H", "seed"])
    for e in ests:
        w.writerow([e.policy, repr(float(e.mean)), repr(float(e.se)), repr(float(e.eps_tail)),
                    e.replications, e.horizon, e.seed])
    return buf.getvalue()
