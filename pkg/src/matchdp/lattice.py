"""Indexing of finite state windows of N^4.

States are numbered in graded lexicographic order: first by total count
``|x|``, then lexicographically in ``(x0, x1, x2)``.  The numbering does
not depend on the window radius, so the window of radius ``r`` is always
a prefix of any larger window.
"""
from __future__ import annotations

import numpy as np


def _binom2(n):
    return n * (n - 1) // 2


def _binom3(n):
    return n * (n - 1) * (n - 2) // 6


def _binom4(n):
    return n * (n - 1) * (n - 2) * (n - 3) // 24


def simplex_size(radius: int) -> int:
    """Number of ``x`` in N^4 with ``|x| <= radius``."""
    if radius < 0:
        return 0
    return _binom4(radius + 4)


def simplex_rank(X) -> np.ndarray | int:
    """Graded-lex rank of one state or of an ``(n, 4)`` array of states."""
    X = np.asarray(X, dtype=np.int64)
    scalar = X.ndim == 1
    X = np.atleast_2d(X)
    x0, x1, x2 = X[:, 0], X[:, 1], X[:, 2]
    n = X.sum(axis=1)
    m = n - x0
    r = (_binom4(n + 3)
         + _binom3(n + 3) - _binom3(n - x0 + 3)
         + _binom2(m + 2) - _binom2(m - x1 + 2)
         + x2)
    return int(r[0]) if scalar else r


def simplex_states(radius: int) -> np.ndarray:
    """All states with ``|x| <= radius`` as an ``(n, 4)`` int64 array, in rank order."""
    blocks = []
    for n in range(radius + 1):
        x0, x1, x2 = np.meshgrid(*(np.arange(n + 1),) * 3, indexing="ij")
        x0, x1, x2 = x0.ravel(), x1.ravel(), x2.ravel()
        keep = x0 + x1 + x2 <= n
        x0, x1, x2 = x0[keep], x1[keep], x2[keep]
        blocks.append(np.stack([x0, x1, x2, n - x0 - x1 - x2], axis=1))
    if not blocks:
        return np.empty((0, 4), dtype=np.int64)
    return np.concatenate(blocks).astype(np.int64)


def simplex_unrank(r: int, radius: int | None = None) -> tuple[int, int, int, int]:
    r = int(r)
    if r < 0:
        raise IndexError(f"negative rank {r}")
    n = 0
    while simplex_size(n) <= r:
        n += 1
    if radius is not None and n > radius:
        raise IndexError(f"rank {r} lies outside the simplex of radius {radius}")
    rem = r - simplex_size(n - 1)
    x0 = 0
    while rem >= _binom2(n - x0 + 2):
        rem -= _binom2(n - x0 + 2)
        x0 += 1
    m = n - x0
    x1 = 0
    while rem >= m - x1 + 1:
        rem -= m - x1 + 1
        x1 += 1
    x2 = rem
    return (x0, x1, x2, n - x0 - x1 - x2)


class StateSpace:
    """A finite, prefix-closed set of states with vectorized index lookup.

    Parameters
    ----------
    radius : int
        Largest total count ``|x|`` stored.
    kind : {"simplex", "priority"}
        ``simplex`` holds every state of the window.  ``priority`` holds
        only states with ``x0 ^ x1 <= 1`` and ``x2 ^ x3 <= 1``, the states
        visited from an empty buffer when l1 and l3 pairs are always
        matched first.  It is closed under that dynamics and under removing
        matchings, so reduced-mode recursions on it are exact.
    """

    def __init__(self, radius: int, kind: str = "simplex"):
        if radius < 0:
            raise ValueError(f"radius must be >= 0, got {radius}")
        if kind not in ("simplex", "priority"):
            raise ValueError(f"unknown state space kind {kind!r}")
        self.radius = int(radius)
        self.kind = kind
        if kind == "simplex":
            self.states = simplex_states(self.radius)
        else:
            self.states = _priority_states(self.radius)
        self.ranks = simplex_rank(self.states) if len(self.states) else np.empty(0, np.int64)
        totals = self.states.sum(axis=1)
        # offsets[r] = number of stored states with |x| < r
        self.offsets = np.searchsorted(totals, np.arange(self.radius + 2), side="left")
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.states)

    def __repr__(self) -> str:
        return f"StateSpace(radius={self.radius}, kind={self.kind!r}, size={len(self)})"

    def prefix(self, radius: int) -> int:
        """Number of stored states with ``|x| <= radius``."""
        if radius < 0:
            return 0
        return int(self.offsets[min(radius, self.radius) + 1])

    def contains(self, X) -> np.ndarray:
        return self.locate(X) >= 0

    def locate(self, X) -> np.ndarray:
        """Positions of the given states, ``-1`` for states not stored."""
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        out = np.full(len(X), -1, dtype=np.int64)
        ok = (X >= 0).all(axis=1) & (X.sum(axis=1) <= self.radius)
        if self.kind == "priority":
            ok &= (np.minimum(X[:, 0], X[:, 1]) <= 1) & (np.minimum(X[:, 2], X[:, 3]) <= 1)
        if not ok.any():
            return out
        r = simplex_rank(X[ok])
        if self.kind == "simplex":
            out[ok] = r
        else:
            pos = np.searchsorted(self.ranks, r)
            out[ok] = pos
        return out

    def index(self, x) -> int:
        pos = int(self.locate(x)[0])
        if pos < 0:
            raise KeyError(f"state {tuple(int(v) for v in x)} is outside {self!r}")
        return pos

    def shifted(self, d) -> np.ndarray:
        """Position of ``x + d`` for every stored ``x`` (``-1`` when absent); cached."""
        key = ("shift", tuple(int(v) for v in d))
        if key not in self._cache:
            self._cache[key] = self.locate(self.states + np.asarray(d, dtype=np.int64))
        return self._cache[key]

    def priority_post(self) -> np.ndarray:
        """Position of ``x - (x0^x1) l1 - (x2^x3) l3`` for every stored ``x``."""
        key = ("priority_post",)
        if key not in self._cache:
            X = self.states
            a = np.minimum(X[:, 0], X[:, 1])
            c = np.minimum(X[:, 2], X[:, 3])
            Y = X - np.stack([a, a, c, c], axis=1)
            self._cache[key] = self.locate(Y)
        return self._cache[key]

    def line_levels(self, d) -> list[np.ndarray]:
        """Group positions by how many times ``d`` can be subtracted (levels 1, 2, ...).

        Within each level positions are sorted, so a radius prefix is a
        ``searchsorted`` away.
        """
        key = ("levels", tuple(int(v) for v in d))
        if key not in self._cache:
            d = np.asarray(d, dtype=np.int64)
            support = d > 0
            depth = (self.states[:, support] // d[support]).min(axis=1)
            order = np.argsort(depth, kind="stable")
            sorted_depth = depth[order]
            bounds = np.searchsorted(sorted_depth, np.arange(1, int(depth.max(initial=0)) + 2))
            self._cache[key] = [np.sort(order[bounds[k]:bounds[k + 1]])
                                for k in range(len(bounds) - 1)]
        return self._cache[key]

    def nbytes(self) -> int:
        return int(self.states.nbytes + self.ranks.nbytes
                   + sum(v.nbytes for v in self._cache.values() if isinstance(v, np.ndarray)))


def _priority_states(radius: int) -> np.ndarray:
    blocks = []
    for n in range(radius + 1):
        # pairs (x0, x1) with min <= 1 and total s, and likewise (x2, x3)
        rows = []
        for s01 in range(n + 1):
            s23 = n - s01
            for x0 in _thin_pairs(s01):
                for x2 in _thin_pairs(s23):
                    rows.append((x0, s01 - x0, x2, s23 - x2))
        rows.sort()
        blocks.append(np.array(rows, dtype=np.int64).reshape(-1, 4))
    return np.concatenate(blocks)


def _thin_pairs(s: int) -> list[int]:
    """First coordinates ``p`` with ``min(p, s - p) <= 1``."""
    return sorted({p for p in (0, 1, s - 1, s) if 0 <= p <= s})
