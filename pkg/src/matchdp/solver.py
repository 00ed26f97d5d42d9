"""Finite-horizon value iteration for the discounted N-graph matching problem.

``V_0 = c`` and ``V_{k+1}(x) = c(x) + gamma * min_m E[V_k(x - m + A)]``.
Stage ``k`` only evaluates states whose successors lie in the region where
``V_{k-1}`` is exact, so the result on the reported window is exactly the
``N``-stage optimum.  The gap to the infinite-horizon value is bounded by
the closed-form tail ``sum_{n>N} gamma^n * max(c) * (|x| + n)``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .lattice import StateSpace, simplex_size
from .model import (E, L1, L2, L3, MODES, ArrivalDistribution, CostFunction, ModelError,
                    apply_matching, as_state, cost, enumerate_matchings, total, validate_model)
from .policies import CENSORED, BaselinePolicy, ThresholdPolicy, threshold_action

logger = logging.getLogger(__name__)

DEFAULT_MEM_CAP_MB = 2048.0
# rough resident bytes per stored state: indices, neighbour tables, three value vectors
_BYTES_PER_STATE = 200


class RadiusError(ModelError):
    """A state needed by the Bellman operator lies outside the value table."""


class ResourceLimitError(RuntimeError):
    def __init__(self, estimate_mb: float, cap_mb: float):
        self.estimate_mb = estimate_mb
        self.cap_mb = cap_mb
        super().__init__(f"refusing to allocate about {estimate_mb:.1f} MB "
                         f"(cap {cap_mb:.1f} MB, set MATCHDP_MEM_CAP_MB to raise it)")


def tail_bound(cmax: float, gamma: float, size, horizon: int):
    """``sum_{n > N} gamma^n * cmax * (|x| + n)`` in closed form.

    ``size`` may be an int or an array of total counts ``|x|``.
    """
    g = gamma
    M = horizon + 1
    geo = g ** M / (1.0 - g)
    lin = g ** M * (M * (1.0 - g) + g) / (1.0 - g) ** 2
    out = cmax * (np.asarray(size, dtype=float) * geo + lin)
    return out if np.ndim(out) else float(out)


def horizon_for(cmax: float, gamma: float, size: int, target: float, n_max: int = 100_000) -> int:
    """Smallest ``N >= 1`` whose tail bound at total count ``size`` is at most ``target``."""
    if target <= 0:
        raise ValueError(f"target tail must be > 0, got {target}")
    if cmax == 0:
        return 1
    for n in range(1, n_max + 1):
        if tail_bound(cmax, gamma, size, n) <= target:
            return n
    raise ValueError(f"no horizon below {n_max} reaches tail {target}")


@dataclass(frozen=True)
class SolverConfig:
    """Model and numerical settings for a solve.

    ``window`` is the radius on which policies are reported.  Evaluating the
    Bellman operator at ``|x| = window`` needs values one arrival deeper, so
    value tables are returned on ``window + 1`` and the recursion runs on the
    simplex of radius ``window + 1 + horizon``.
    """

    gamma: float
    mu: ArrivalDistribution
    cost: CostFunction
    window: int
    horizon: int | None = None
    target_eps: float | None = None
    mode: str = "priority_reduced"
    tie_tol: float = 1e-9
    space: str = "simplex"
    mem_cap_mb: float | None = None

    def __post_init__(self):
        if not isinstance(self.mu, ArrivalDistribution):
            object.__setattr__(self, "mu", ArrivalDistribution(tuple(self.mu)))
        if not isinstance(self.cost, CostFunction):
            object.__setattr__(self, "cost", CostFunction(tuple(self.cost)))
        problems = []
        if not 0.0 < self.gamma < 1.0:
            problems.append(f"0 < gamma < 1 fails (gamma = {self.gamma})")
        if int(self.window) != self.window or self.window < 0:
            problems.append(f"window >= 0 fails (window = {self.window})")
        if self.horizon is None and self.target_eps is None:
            problems.append("one of horizon or target_eps is required")
        if self.horizon is not None and (int(self.horizon) != self.horizon or self.horizon < 1):
            problems.append(f"horizon >= 1 fails (horizon = {self.horizon})")
        if self.target_eps is not None and not self.target_eps > 0:
            problems.append(f"target_eps > 0 fails (target_eps = {self.target_eps})")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.tie_tol > 0:
            problems.append(f"tie tolerance > 0 fails (tau = {self.tie_tol})")
        if self.space not in ("simplex", "priority"):
            problems.append(f"space must be 'simplex' or 'priority', got {self.space!r}")
        if self.space == "priority" and self.mode == "full":
            problems.append("full minimization needs the simplex state space")
        if problems:
            raise ModelError("; ".join(problems))

    @property
    def table_radius(self) -> int:
        return int(self.window) + 1

    @property
    def n_stages(self) -> int:
        if self.horizon is not None:
            return int(self.horizon)
        return horizon_for(self.cost.max_coefficient, self.gamma, self.table_radius, self.target_eps)

    @property
    def internal_radius(self) -> int:
        return self.table_radius + self.n_stages

    def replace(self, **changes) -> "SolverConfig":
        params = {f: getattr(self, f) for f in self.__dataclass_fields__}
        params.update(changes)
        return SolverConfig(**params)

    def swapped(self) -> "SolverConfig":
        """The class-reversed model (0<->3, 1<->2)."""
        return self.replace(mu=self.mu.swapped(), cost=self.cost.swapped())


class ValueTable:
    """Values of a function on the states of a :class:`StateSpace` with ``|x| <= radius``."""

    def __init__(self, space: StateSpace, values, radius: int | None = None, eps=None):
        self.space = space
        self.radius = space.radius if radius is None else int(radius)
        if self.radius > space.radius:
            raise ValueError(f"radius {self.radius} exceeds state space radius {space.radius}")
        n = space.prefix(self.radius)
        values = np.asarray(values, dtype=float)
        if values.shape != (n,):
            raise ValueError(f"expected {n} values for radius {self.radius}, got shape {values.shape}")
        self.values = values
        self.eps = None if eps is None else np.asarray(eps, dtype=float)

    @classmethod
    def from_function(cls, fn, radius: int, kind: str = "simplex") -> "ValueTable":
        space = StateSpace(radius, kind)
        return cls(space, [fn(tuple(int(v) for v in s)) for s in space.states])

    @classmethod
    def from_cost(cls, c: CostFunction, radius: int, kind: str = "simplex") -> "ValueTable":
        space = StateSpace(radius, kind)
        return cls(space, c.evaluate(space.states))

    @property
    def states(self) -> np.ndarray:
        return self.space.states[: len(self.values)]

    def __len__(self):
        return len(self.values)

    def __repr__(self):
        return f"ValueTable(radius={self.radius}, kind={self.space.kind!r}, size={len(self)})"

    def position(self, x) -> int:
        if len(x) != 4 or min(x) < 0:
            raise ModelError(f"not a state: {tuple(x)}")
        if total(x) > self.radius:
            raise RadiusError(f"state {tuple(x)} lies outside the table radius {self.radius}")
        pos = int(self.space.locate(x)[0])
        if pos < 0:
            raise RadiusError(f"state {tuple(x)} is not stored in {self.space!r}")
        return pos

    def __getitem__(self, x) -> float:
        return float(self.values[self.position(x)])

    def lookup(self, X) -> np.ndarray:
        """Vectorized values; states outside the table give ``nan``."""
        pos = self.space.locate(X)
        out = np.full(len(pos), np.nan)
        ok = (pos >= 0) & (pos < len(self.values))
        out[ok] = self.values[pos[ok]]
        return out

    def restrict(self, radius: int) -> "ValueTable":
        n = self.space.prefix(radius)
        eps = None if self.eps is None else self.eps[:n]
        return ValueTable(self.space, self.values[:n], radius, eps)

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x0", "x1", "x2", "x3", "value", "eps"])
        eps = self.eps if self.eps is not None else np.zeros(len(self))
        for s, val, e in zip(self.states, self.values, eps):
            w.writerow([*(int(v) for v in s), repr(float(val)), repr(float(e))])
        return buf.getvalue()


@dataclass
class Solution:
    """Result of :func:`value_iteration`; unpacks as ``(table, eps, sup_changes)``."""

    table: ValueTable
    eps: np.ndarray
    sup_changes: list[float]
    horizon: int
    internal_radius: int
    space_size: int

    def __iter__(self):
        return iter((self.table, self.eps, self.sup_changes))


# -- the Bellman operator at a single state ----------------------------------

def expected_next(v: ValueTable, y, mu: ArrivalDistribution) -> float:
    """``E[v(y + A)]``, summed over classes in the order 0, 1, 2, 3."""
    s = 0.0
    for i in range(4):
        z = (y[0] + (i == 0), y[1] + (i == 1), y[2] + (i == 2), y[3] + (i == 3))
        term = mu.mu[i] * v[z]
        s = term if i == 0 else s + term
    return s


def bellman_apply(v: ValueTable, x, m, cfg: SolverConfig) -> float:
    """``L_m v(x) = c(x) + gamma * E[v(x - m + A)]``."""
    x = as_state(x)
    if total(x) + 1 > v.radius:
        raise RadiusError(f"state {x} needs values up to |x| + 1 = {total(x) + 1}, "
                          f"table radius is {v.radius}")
    y = apply_matching(x, m)
    return cost(cfg.cost, x) + cfg.gamma * expected_next(v, y, cfg.mu)


def bellman_min(v: ValueTable, x, cfg: SolverConfig, mode: str | None = None):
    """``(min_m L_m v(x), matchings within tau of the minimum)``."""
    x = as_state(x)
    mode = cfg.mode if mode is None else mode
    values = {m: bellman_apply(v, x, m, cfg) for m in enumerate_matchings(x, mode)}
    best = min(values.values())
    return best, [m for m, val in values.items() if val <= best + cfg.tie_tol]


# -- vectorized recursion -------------------------------------------------------

def estimate_memory_mb(cfg: SolverConfig) -> float:
    S = cfg.internal_radius
    n = simplex_size(S) if cfg.space == "simplex" else 8 * (S + 1) ** 2
    return n * _BYTES_PER_STATE / 2**20


def memory_cap_mb(cfg: SolverConfig | None = None) -> float:
    if cfg is not None and cfg.mem_cap_mb is not None:
        return float(cfg.mem_cap_mb)
    env = os.environ.get("MATCHDP_MEM_CAP_MB")
    return float(env) if env else DEFAULT_MEM_CAP_MB


def _line_cummin(values: np.ndarray, space: StateSpace, d, n: int) -> np.ndarray:
    """``M(y) = min_{j >= 0} values(y - j d)`` over the first ``n`` positions."""
    down = space.shifted(-np.asarray(d))
    out = values.copy()
    for level in space.line_levels(d):
        idx = level[: np.searchsorted(level, n)]
        if not len(idx):
            break
        out[idx] = np.minimum(out[idx], out[down[idx]])
    return out


def _stage(V: np.ndarray, space: StateSpace, cfg: SolverConfig, n_out: int,
           costs: np.ndarray) -> np.ndarray:
    ups = [space.shifted(E[i]) for i in range(4)]
    mu = cfg.mu.mu
    Ex = mu[0] * V[ups[0][:n_out]]
    for i in (1, 2, 3):
        Ex = Ex + mu[i] * V[ups[i][:n_out]]
    if cfg.mode == "priority_reduced":
        best = _line_cummin(Ex, space, L2, n_out)[space.priority_post()[:n_out]]
    else:
        best = Ex
        for d in (L1, L2, L3):
            best = _line_cummin(best, space, d, n_out)
    return costs[:n_out] + cfg.gamma * best


def bellman_stages(cfg: SolverConfig, stages: int, radius: int, v0: np.ndarray | None = None,
                   space: StateSpace | None = None):
    """Yield ``(k, ValueTable)`` for ``V_k = L^k V_0`` on its exact region ``radius - k``.

    ``V_0`` defaults to the cost ``c``.
    """
    space = space or StateSpace(radius, cfg.space)
    costs = cfg.cost.evaluate(space.states)
    V = costs.copy() if v0 is None else np.asarray(v0, dtype=float)[: space.prefix(radius)]
    yield 0, ValueTable(space, V, radius)
    for k in range(1, stages + 1):
        n_out = space.prefix(radius - k)
        V = _stage(V, space, cfg, n_out, costs)
        yield k, ValueTable(space, V, radius - k)


def value_iteration(cfg: SolverConfig) -> Solution:
    """Backward recursion from ``V_0 = c``; returns ``V_N`` on radius ``window + 1``."""
    N = cfg.n_stages
    S = cfg.table_radius + N
    need, cap = estimate_memory_mb(cfg), memory_cap_mb(cfg)
    if need > cap:
        raise ResourceLimitError(need, cap)
    space = StateSpace(S, cfg.space)
    logger.info("value iteration: %d stages on %r", N, space)
    sup_changes = []
    prev = None
    table = None
    for k, table in bellman_stages(cfg, N, S, space=space):
        if prev is not None:
            sup_changes.append(float(np.max(np.abs(table.values - prev[: len(table.values)]),
                                            initial=0.0)))
        prev = table.values
    eps = tail_bound(cfg.cost.max_coefficient, cfg.gamma,
                     table.states.sum(axis=1), N)
    table = ValueTable(space, table.values, cfg.table_radius, eps)
    return Solution(table, eps, sup_changes, N, S, len(space))


# -- policy extraction and verification ------------------------------------------

def extract_policy(v: ValueTable, cfg: SolverConfig, radius: int | None = None,
                   mode: str | None = None) -> dict:
    """Argmin sets of the Bellman operator under ``v`` for every ``|x| <= radius``."""
    radius = cfg.window if radius is None else radius
    if radius + 1 > v.radius:
        raise RadiusError(f"policy radius {radius} needs a table of radius {radius + 1}")
    out = {}
    for s in v.space.states[: v.space.prefix(radius)]:
        x = tuple(int(t) for t in s)
        out[x] = bellman_min(v, x, cfg, mode)[1]
    return out


@dataclass
class ThresholdExtraction:
    policy: ThresholdPolicy
    probes: dict[int, list[float]]
    unimodality_violations: list[tuple[int, int, float]]
    dropped: dict[int, str]

    @property
    def censored(self) -> list[int]:
        return [i for i, t in self.policy.thresholds.items() if t is CENSORED]


def probe_sequence(v: ValueTable, i: int, mu: ArrivalDistribution) -> list[float]:
    """``E[v(A + |i| e2 + j l2)]`` for ``i <= 0``, ``E[v(A + i e1 + j l2)]`` for ``i >= 0``.

    Runs over every ``j`` whose successor states lie inside the table.
    """
    out = []
    j = 0
    while abs(i) + 2 * j + 1 <= v.radius:
        if i <= 0:
            y = (0, j, -i + j, 0)
        else:
            y = (0, i + j, j, 0)
        out.append(expected_next(v, y, mu))
        j += 1
    return out


def threshold_from_sequence(s, tol: float):
    """Smallest argmin of ``s``, or CENSORED if it sits at the last observed entry."""
    best = min(s)
    t = next(j for j, val in enumerate(s) if val <= best + tol)
    if t == len(s) - 1:
        return CENSORED
    return t


def unimodality_gaps(s, t, tol: float) -> list[tuple[int, float]]:
    """Steps ``j`` where ``s`` is not nonincreasing before ``t`` and nondecreasing after."""
    last = len(s) - 1 if t is CENSORED else t
    bad = []
    for j in range(len(s) - 1):
        step = s[j + 1] - s[j]
        if j < last and step > tol:
            bad.append((j, step))
        elif j >= last and -step > tol:
            bad.append((j, -step))
    return bad


def extract_thresholds(v: ValueTable, cfg: SolverConfig, i_max: int | None = None) -> ThresholdExtraction:
    """Read thresholds off the probe sequences along l2 and check their unimodality."""
    i_max = cfg.window if i_max is None else int(i_max)
    thresholds, probes, violations, dropped = {}, {}, [], {}
    for i in range(-i_max, i_max + 1):
        s = probe_sequence(v, i, cfg.mu)
        if len(s) < 2:
            dropped[i] = f"probe sequence has {len(s)} entries inside radius {v.radius}"
            continue
        t = threshold_from_sequence(s, cfg.tie_tol)
        probes[i] = s
        thresholds[i] = t
        violations.extend((i, j, gap) for j, gap in unimodality_gaps(s, t, cfg.tie_tol))
    if dropped:
        logger.debug("dropped threshold indices: %s", sorted(dropped))
    return ThresholdExtraction(ThresholdPolicy(thresholds, i_max), probes, violations, dropped)


@dataclass
class OptimalityReport:
    checked: int
    violations: list[tuple[tuple[int, ...], float]] = field(default_factory=list)
    max_gap: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_threshold_optimality(v: ValueTable, p: ThresholdPolicy, cfg: SolverConfig,
                                radius: int | None = None, tol: float | None = None,
                                mode: str | None = None) -> OptimalityReport:
    """Compare ``L_{m*(x)} v(x)`` with the Bellman minimum on ``|x| <= radius``.

    The minimum is over all matchings on the simplex, and over the
    l1/l3-saturating family on the priority space.
    """
    radius = cfg.window if radius is None else radius
    tol = cfg.tie_tol if tol is None else tol
    if mode is None:
        mode = "full" if v.space.kind == "simplex" else "priority_reduced"
    report = OptimalityReport(checked=0)
    for s in v.space.states[: v.space.prefix(radius)]:
        x = tuple(int(t) for t in s)
        gap = bellman_apply(v, x, threshold_action(p, x), cfg) - bellman_min(v, x, cfg, mode)[0]
        report.checked += 1
        report.max_gap = max(report.max_gap, gap)
        if gap > tol:
            report.violations.append((x, gap))
    return report


# -- growth conditions -------------------------------------------------------------

@dataclass
class GrowthReport:
    checked_ratio: int
    worst_ratio: float
    cmax: float
    checked_drift: int
    drift_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.worst_ratio <= self.cmax and not self.drift_violations


def expected_weight(x, policy, steps: int, mu: ArrivalDistribution) -> float:
    """Exact ``E_x[w(X_p)]`` with ``w(x) = |x| + 1``, by propagating the state law."""
    dist = {tuple(x): 1.0}
    for _ in range(steps):
        nxt: dict = {}
        for s, p in dist.items():
            y = apply_matching(s, policy.action(s))
            for i in mu.support:
                z = tuple(y[k] + (k == i) for k in range(4))
                nxt[z] = nxt.get(z, 0.0) + p * mu.mu[i]
        dist = nxt
    return math.fsum(p * (total(s) + 1) for s, p in dist.items())


def check_growth_bound(cfg: SolverConfig, horizons=(1, 2, 3, 4), radius: int | None = None,
                       policies=("match_nothing", "full_greedy", "never_l2", "l2_first"),
                       tol: float = 1e-12) -> GrowthReport:
    """Check ``c(x)/w(x) <= max(c)`` and ``E[w(X_p)] <= w(x) + p`` on a window."""
    radius = min(cfg.window, 4) if radius is None else radius
    space = StateSpace(radius)
    cmax = cfg.cost.max_coefficient
    ratios = cfg.cost.evaluate(space.states) / (space.states.sum(axis=1) + 1)
    report = GrowthReport(len(ratios), float(ratios.max(initial=0.0)), cmax, 0)
    for s in space.states:
        x = tuple(int(t) for t in s)
        for name in policies:
            for p in horizons:
                ew = expected_weight(x, BaselinePolicy(name), p, cfg.mu)
                report.checked_drift += 1
                if ew > total(x) + 1 + p + tol:
                    report.drift_violations.append((x, name, p, ew))
    return report


def swap_table_check(v: ValueTable, w: ValueTable) -> float:
    """``max |v(sigma x) - w(x)|`` over the common window."""
    radius = min(v.radius, w.radius)
    X = w.states[: w.space.prefix(radius)]
    return float(np.max(np.abs(v.lookup(X[:, ::-1]) - w.lookup(X)), initial=0.0))


__all__ = [
    "SolverConfig", "ValueTable", "Solution", "RadiusError", "ResourceLimitError",
    "bellman_apply", "bellman_min", "expected_next", "value_iteration", "bellman_stages",
    "extract_policy", "extract_thresholds", "ThresholdExtraction", "probe_sequence",
    "threshold_from_sequence", "unimodality_gaps", "verify_threshold_optimality",
    "OptimalityReport", "check_growth_bound", "GrowthReport", "tail_bound", "horizon_for",
    "estimate_memory_mb", "swap_table_check",
]
