"""The N-graph matching model: states, arrivals, linear costs and matchings.

Classes are numbered 0..3 and the compatibility edges are
``l1 = {0, 1}``, ``l2 = {1, 2}`` and ``l3 = {2, 3}``.  A state is a
4-tuple of buffer counts and a matching is the edge-count triple
``(a, b, c)`` of ``l1``, ``l2`` and ``l3`` pairs removed from the buffer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

State = tuple[int, int, int, int]
Matching = tuple[int, int, int]

E = np.eye(4, dtype=np.int64)
L1 = np.array([1, 1, 0, 0], dtype=np.int64)
L2 = np.array([0, 1, 1, 0], dtype=np.int64)
L3 = np.array([0, 0, 1, 1], dtype=np.int64)
EDGES = (L1, L2, L3)

MODES = ("full", "priority_reduced")


class ModelError(ValueError):
    """Invalid model parameters or contract violation on states/matchings."""


class InfeasibleMatchingError(ModelError):
    pass


@dataclass(frozen=True)
class ArrivalDistribution:
    """Class probabilities ``mu(0..3)`` of the single arriving item."""

    mu: tuple[float, float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(p) for p in self.mu))
        problems = arrival_violations(self.mu)
        if problems:
            raise ModelError("; ".join(problems))

    def swapped(self) -> "ArrivalDistribution":
        return ArrivalDistribution(self.mu[::-1])

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.mu) if p > 0)


@dataclass(frozen=True)
class CostFunction:
    """Linear holding cost ``c0*x0 + c1*x1 + c2*x2 + c3*x3``.

    Admissibility (nonnegative coefficients, ``c2 <= c0`` and ``c1 <= c3``)
    is not enforced here so that inadmissible costs can be scanned by the
    structure checks; use :func:`validate_model` to reject them.
    """

    c: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.c) != 4:
            raise ModelError(f"cost needs 4 coefficients, got {len(self.c)}")
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))

    def __call__(self, x: Sequence[int]) -> float:
        return cost(self, x)

    @property
    def max_coefficient(self) -> float:
        return max(self.c)

    @property
    def admissible(self) -> bool:
        return not cost_violations(self.c)

    def swapped(self) -> "CostFunction":
        return CostFunction(self.c[::-1])

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Vectorized cost over an ``(n, 4)`` array, same summation order as :func:`cost`."""
        X = np.asarray(X)
        c0, c1, c2, c3 = self.c
        out = c0 * X[..., 0]
        out = out + c1 * X[..., 1]
        out = out + c2 * X[..., 2]
        out = out + c3 * X[..., 3]
        return out.astype(float)


def arrival_violations(mu: Sequence[float]) -> list[str]:
    problems = []
    if len(mu) != 4:
        return [f"mu needs 4 probabilities, got {len(mu)}"]
    for i, p in enumerate(mu):
        if not math.isfinite(p) or p < 0:
            problems.append(f"mu({i}) >= 0 fails (mu({i}) = {p})")
    total = math.fsum(mu)
    if abs(total - 1.0) > 1e-12:
        problems.append(f"sum of mu = 1 fails (sum = {total!r})")
    return problems


def cost_violations(c: Sequence[float]) -> list[str]:
    problems = []
    if len(c) != 4:
        return [f"cost needs 4 coefficients, got {len(c)}"]
    for i, v in enumerate(c):
        if not math.isfinite(v) or v < 0:
            problems.append(f"c{i} >= 0 fails (c{i} = {v})")
    if c[2] > c[0]:
        problems.append(f"admissibility c2 <= c0 fails (c2 = {c[2]}, c0 = {c[0]})")
    if c[1] > c[3]:
        problems.append(f"admissibility c1 <= c3 fails (c1 = {c[1]}, c3 = {c[3]})")
    return problems


def validate_model(mu: Sequence[float] | ArrivalDistribution,
                   c: Sequence[float] | CostFunction) -> list[str]:
    """Return every violated model constraint; an empty list means the model is valid."""
    mu = mu.mu if isinstance(mu, ArrivalDistribution) else tuple(mu)
    c = c.c if isinstance(c, CostFunction) else tuple(c)
    return arrival_violations(mu) + cost_violations(c)


def as_state(x: Iterable[int]) -> State:
    x = tuple(int(v) for v in x)
    if len(x) != 4 or min(x) < 0:
        raise ModelError(f"not a state: {x}")
    return x  # type: ignore[return-value]


def total(x: Sequence[int]) -> int:
    return x[0] + x[1] + x[2] + x[3]


def swap_classes(x: Sequence[int]) -> State:
    """Class reversal 0<->3, 1<->2; it maps l1 to l3 and fixes l2."""
    return (x[3], x[2], x[1], x[0])


def matching_vector(m: Matching) -> State:
    a, b, c = m
    return (a, a + b, b + c, c)


def is_feasible(x: Sequence[int], m: Matching) -> bool:
    a, b, c = m
    return (min(a, b, c) >= 0 and a <= x[0] and a + b <= x[1]
            and b + c <= x[2] and c <= x[3])


def priority_matching_counts(x: Sequence[int]) -> tuple[int, int, int]:
    """Forced ``l1`` and ``l3`` counts ``(x0 ^ x1, x2 ^ x3)`` plus the ``l2`` room left after them."""
    a = min(x[0], x[1])
    c = min(x[2], x[3])
    return a, c, min(x[1] - a, x[2] - c)


def enumerate_matchings(x: Sequence[int], mode: str = "full") -> list[Matching]:
    """All feasible matchings of ``x``, sorted lexicographically.

    ``priority_reduced`` keeps only matchings that saturate ``l1`` and ``l3``.
    """
    x = as_state(x)
    if mode == "full":
        out = []
        for a in range(min(x[0], x[1]) + 1):
            for c in range(min(x[2], x[3]) + 1):
                for b in range(min(x[1] - a, x[2] - c) + 1):
                    out.append((a, b, c))
        out.sort()
        return out
    if mode == "priority_reduced":
        a, c, room = priority_matching_counts(x)
        return [(a, b, c) for b in range(room + 1)]
    raise ModelError(f"unknown matching mode {mode!r}; expected one of {MODES}")


def apply_matching(x: Sequence[int], m: Matching) -> State:
    if not is_feasible(x, m):
        raise InfeasibleMatchingError(f"matching {tuple(m)} is not feasible in state {tuple(x)}")
    mv = matching_vector(m)
    return tuple(xi - mi for xi, mi in zip(x, mv))  # type: ignore[return-value]


def cost(c: CostFunction | Sequence[float], x: Sequence[int]) -> float:
    coef = c.c if isinstance(c, CostFunction) else c
    return coef[0] * x[0] + coef[1] * x[1] + coef[2] * x[2] + coef[3] * x[3]
