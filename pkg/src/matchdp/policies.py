"""Decision rules: threshold rules with priority to l1/l3, and fixed baselines.

A decision rule maps a state to a feasible matching ``(a, b, c)``; the
post-decision state is ``x - (a, a + b, b + c, c)``.  Every rule here also
offers a batch form over ``(n, 4)`` integer arrays for simulation.
"""
from __future__ import annotations

import csv
import io
from typing import Iterable, Mapping

import numpy as np

from .model import Matching, ModelError, State


class _Censored:
    """Threshold not reached inside the observation window (the ``+inf`` case)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "CENSORED"

    def __str__(self):
        return "inf"

    def __reduce__(self):
        return (_Censored, ())


CENSORED = _Censored()

# Stand-in for CENSORED inside integer arrays; larger than any reachable l2 room.
_BIG = np.iinfo(np.int64).max // 4

BASELINES = ("match_nothing", "full_greedy", "never_l2", "l2_first")


class ThresholdRangeError(ModelError):
    """A threshold was needed for an index the policy does not store."""

    def __init__(self, index, state=None, step=None):
        self.index = index
        self.state = state
        self.step = step
        where = f" at state {state}" if state is not None else ""
        when = f" (step {step})" if step is not None else ""
        super().__init__(f"no threshold stored for index i(x) = {index}{where}{when}")


def imbalance(x) -> int:
    """``i(x) = (x1 - x0) - (x2 - x3)``; matchings leave it unchanged."""
    return (x[1] - x[0]) - (x[2] - x[3])


def l2_excess(x) -> int:
    """``(x1 - x0) ^ (x2 - x3)``, the most l2 pairs left after saturating l1 and l3."""
    return min(x[1] - x[0], x[2] - x[3])


def k_threshold(x, t) -> int:
    """``((x1 - x0) ^ (x2 - x3) - t)^+``; a censored ``t`` gives 0."""
    if t is CENSORED:
        return 0
    return max(l2_excess(x) - t, 0)


class ThresholdPolicy:
    """Threshold rule in l2 with priority to l1 and l3.

    Parameters
    ----------
    thresholds : mapping of int to int or CENSORED
        ``t_i`` per imbalance index ``i``.  Indices may be missing (for
        instance dropped during extraction); asking for one raises
        :class:`ThresholdRangeError`.
    i_max : int, optional
        Half-width of the index window; defaults to the largest ``|i|`` stored.
    """

    def __init__(self, thresholds: Mapping[int, object], i_max: int | None = None):
        clean = {}
        for i, t in thresholds.items():
            if t is not CENSORED:
                if isinstance(t, float) and np.isinf(t) and t > 0:
                    t = CENSORED
                elif int(t) != t or int(t) < 0:
                    raise ModelError(f"threshold t_{i} must be a nonnegative integer or CENSORED, got {t!r}")
                else:
                    t = int(t)
            clean[int(i)] = t
        self.thresholds = dict(sorted(clean.items()))
        if i_max is None:
            i_max = max((abs(i) for i in self.thresholds), default=0)
        self.i_max = int(i_max)
        bad = [i for i in self.thresholds if abs(i) > self.i_max]
        if bad:
            raise ModelError(f"threshold indices {bad} exceed i_max = {self.i_max}")

    @classmethod
    def constant(cls, t, i_max: int) -> "ThresholdPolicy":
        return cls({i: t for i in range(-i_max, i_max + 1)}, i_max=i_max)

    def __eq__(self, other):
        return (isinstance(other, ThresholdPolicy) and self.thresholds == other.thresholds
                and self.i_max == other.i_max)

    def __repr__(self):
        return f"ThresholdPolicy(i_max={self.i_max}, stored={len(self.thresholds)})"

    def threshold(self, i: int):
        try:
            return self.thresholds[i]
        except KeyError:
            raise ThresholdRangeError(i) from None

    def __call__(self, x) -> Matching:
        return threshold_action(self, x)

    def action(self, x) -> Matching:
        return threshold_action(self, x)

    def actions(self, X: np.ndarray) -> np.ndarray:
        """Batch form of :meth:`action` over an ``(n, 4)`` array; returns ``(n, 3)``."""
        X = np.asarray(X, dtype=np.int64)
        a = np.minimum(X[:, 0], X[:, 1])
        c = np.minimum(X[:, 2], X[:, 3])
        excess = np.minimum(X[:, 1] - X[:, 0], X[:, 2] - X[:, 3])
        b = np.zeros(len(X), dtype=np.int64)
        need = excess > 0
        if need.any():
            idx = (X[need, 1] - X[need, 0]) - (X[need, 2] - X[need, 3])
            t = self._lookup(idx, X[need])
            b[need] = np.maximum(excess[need] - t, 0)
        return np.stack([a, b, c], axis=1)

    def _lookup(self, idx: np.ndarray, X: np.ndarray) -> np.ndarray:
        table = self._dense()
        pos = idx + self.i_max
        bad = (pos < 0) | (pos >= len(table))
        if not bad.any():
            t = table[pos]
            bad = t < 0
            if not bad.any():
                return t
        k = int(np.flatnonzero(bad)[0])
        raise ThresholdRangeError(int(idx[k]), tuple(int(v) for v in X[k]))

    def _dense(self) -> np.ndarray:
        if getattr(self, "_table", None) is None:
            table = np.full(2 * self.i_max + 1, -1, dtype=np.int64)
            for i, t in self.thresholds.items():
                table[i + self.i_max] = _BIG if t is CENSORED else t
            self._table = table
        return self._table

    def swapped(self) -> "ThresholdPolicy":
        """The same family; ``i(x)`` is invariant under class reversal."""
        return ThresholdPolicy(self.thresholds, self.i_max)

    # -- serialization -------------------------------------------------------
    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "t_i"])
        for i, t in self.thresholds.items():
            w.writerow([i, "inf" if t is CENSORED else t])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, i_max: int | None = None) -> "ThresholdPolicy":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        reader = csv.DictReader(lines)
        if reader.fieldnames != ["i", "t_i"]:
            raise ModelError(f"threshold CSV needs header 'i,t_i', got {reader.fieldnames}")
        thresholds = {}
        for row in reader:
            raw = row["t_i"].strip()
            thresholds[int(row["i"])] = CENSORED if raw == "inf" else int(raw)
        return cls(thresholds, i_max=i_max)


def threshold_action(p: ThresholdPolicy, x) -> Matching:
    """Matching ``(x0^x1, k_t(x), x2^x3)`` with ``t = t_{i(x)}``.

    When ``(x1 - x0) ^ (x2 - x3) <= 0`` no l2 pair can be kept or matched
    after saturating l1 and l3, so ``k = 0`` for every threshold and the
    table is not consulted.
    """
    a = min(x[0], x[1])
    c = min(x[2], x[3])
    if l2_excess(x) <= 0:
        return (a, 0, c)
    i = imbalance(x)
    try:
        t = p.threshold(i)
    except ThresholdRangeError:
        raise ThresholdRangeError(i, tuple(x)) from None
    return (a, k_threshold(x, t), c)


class BaselinePolicy:
    """Fixed comparison rules.

    ``match_nothing`` never matches; ``full_greedy`` and ``never_l2`` are the
    thresholds ``t = 0`` and ``t = +inf``; ``l2_first`` matches l2 pairs
    before l1 and l3 pairs.
    """

    def __init__(self, name: str):
        if name not in BASELINES:
            raise ModelError(f"unknown baseline policy {name!r}; expected one of {BASELINES}")
        self.name = name

    def __repr__(self):
        return f"BaselinePolicy({self.name!r})"

    def __call__(self, x) -> Matching:
        return baseline_action(self.name, x)

    def action(self, x) -> Matching:
        return baseline_action(self.name, x)

    def actions(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        zeros = np.zeros(len(X), dtype=np.int64)
        if self.name == "match_nothing":
            return np.stack([zeros, zeros, zeros], axis=1)
        a = np.minimum(X[:, 0], X[:, 1])
        c = np.minimum(X[:, 2], X[:, 3])
        if self.name == "never_l2":
            return np.stack([a, zeros, c], axis=1)
        if self.name == "full_greedy":
            b = np.maximum(np.minimum(X[:, 1] - X[:, 0], X[:, 2] - X[:, 3]), 0)
            return np.stack([a, b, c], axis=1)
        b = np.minimum(X[:, 1], X[:, 2])
        a = np.minimum(X[:, 0], X[:, 1] - b)
        c = np.minimum(X[:, 2] - b, X[:, 3])
        return np.stack([a, b, c], axis=1)


def baseline_action(name: str, x) -> Matching:
    if name == "match_nothing":
        return (0, 0, 0)
    if name == "full_greedy":
        a, c = min(x[0], x[1]), min(x[2], x[3])
        return (a, max(l2_excess(x), 0), c)
    if name == "never_l2":
        return (min(x[0], x[1]), 0, min(x[2], x[3]))
    if name == "l2_first":
        b = min(x[1], x[2])
        return (min(x[0], x[1] - b), b, min(x[2] - b, x[3]))
    raise ModelError(f"unknown baseline policy {name!r}; expected one of {BASELINES}")


class CallablePolicy:
    """Wrap a plain ``state -> matching`` function so it can be simulated."""

    def __init__(self, fn, name: str | None = None):
        self.fn = fn
        self.name = name or getattr(fn, "__name__", "callable")

    def __call__(self, x):
        return tuple(self.fn(x))

    action = __call__

    def actions(self, X):
        X = np.asarray(X, dtype=np.int64)
        return np.array([self.fn(tuple(int(v) for v in row)) for row in X],
                        dtype=np.int64).reshape(-1, 3)


def as_policy(p):
    if isinstance(p, (ThresholdPolicy, BaselinePolicy, CallablePolicy)):
        return p
    if isinstance(p, str):
        return BaselinePolicy(p)
    if callable(p):
        return CallablePolicy(p)
    raise ModelError(f"cannot use {p!r} as a decision rule")


def policy_table(policy, states: Iterable[State]) -> dict[State, Matching]:
    policy = as_policy(policy)
    return {tuple(s): tuple(policy.action(s)) for s in states}
