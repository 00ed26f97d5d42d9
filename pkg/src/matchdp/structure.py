"""Inequality scans for the value-function classes preserved by the Bellman operator.

Each family is a set of base states plus an inequality ``lhs >= rhs``
between values at displaced states.  Instances whose displaced states leave
the table are skipped and counted, never extrapolated.

Families (``l1 = (1,1,0,0)``, ``l2 = (0,1,1,0)``, ``l3 = (0,0,1,1)``):

* ``I1``/``I3``: ``v(x) <= v(x + l1)`` and ``v(x) <= v(x + l3)``
* ``Iprime``: ``v(x) <= v(x + l1 - l2)`` and ``v(x) <= v(x + l3 - l2)`` when ``x1 x2 > 0``
* ``C2``: convexity along ``l2`` when ``x2 >= x3 - 1`` and ``x1 >= x0 - 1``
* ``B``: boundary convexity along ``l2`` after removing ``l1``, ``l3`` or both
* ``Cprime``: convexity along ``l2 - l1``, ``l2 - l3`` and ``l2 - l1 - l3`` at states
  holding at most one class-1 or class-2 item
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lattice import StateSpace
from .model import L1, L2, L3, CostFunction
from .solver import SolverConfig, ValueTable, bellman_stages

CLASS_NAMES = ("I1", "I3", "Iprime", "C2", "B", "Cprime")
DEFAULT_TOL = 1e-9

_E = [np.eye(4, dtype=np.int64)[i] for i in range(4)]


@dataclass
class Violation:
    state: tuple[int, int, int, int]
    ineq: str
    lhs: float
    rhs: float
    gap: float

    def as_dict(self):
        return {"state": list(self.state), "ineq": self.ineq, "lhs": self.lhs,
                "rhs": self.rhs, "gap": self.gap}


@dataclass
class ClassReport:
    name: str
    checked: int = 0
    skipped: int = 0
    skipped_negative: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations

    def as_dict(self):
        return {"class": self.name, "checked": self.checked, "skipped": self.skipped,
                "skipped_negative": self.skipped_negative,
                "violations": [v.as_dict() for v in self.violations]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    def __repr__(self):
        return (f"ClassReport({self.name!r}, checked={self.checked}, skipped={self.skipped}, "
                f"violations={len(self.violations)})")


@dataclass(frozen=True)
class Family:
    """``v(base + hi2) - v(base + hi1) >= v(base + lo2) - v(base + lo1)`` for every base.

    Monotonicity ``v(x) <= v(x + d)`` is the special case ``hi2 = d``,
    ``hi1 = lo1 = lo2 = 0``.
    """

    ineq: str
    hi2: tuple
    hi1: tuple
    lo2: tuple
    lo1: tuple
    bases: object  # callable radius -> (n, 4) array


def _vec(*parts):
    return tuple(int(v) for v in np.sum([np.asarray(p, dtype=np.int64) for p in parts], axis=0))


_ZERO = (0, 0, 0, 0)


def _monotone(ineq, d, bases):
    return Family(ineq, tuple(d), _ZERO, _ZERO, _ZERO, bases)


def _convex(ineq, d, bases, offset=_ZERO):
    """``v(b + off + 2d) - v(b + off + d) >= v(b + off + d) - v(b)``."""
    one = _vec(offset, d)
    two = _vec(offset, d, d)
    return Family(ineq, two, one, one, _ZERO, bases)


def _all_states(radius):
    return StateSpace(radius).states


def _where(pred):
    def bases(radius):
        X = _all_states(radius)
        return X[pred(X)]
    return bases


def _shape(anchor, e_indices, free=()):
    """States ``anchor + sum(k * u for k, u in free) + e_i`` within ``radius``.

    ``free`` lists ``(unit_vector, minimum)`` pairs for the shape parameters.
    """
    anchor = np.asarray(anchor, dtype=np.int64)

    def bases(radius):
        rows = []
        span = range(radius + 1)
        grids = np.meshgrid(*([np.array(span)] * len(free)), indexing="ij") if free else []
        params = np.stack([g.ravel() for g in grids], axis=1) if free else np.zeros((1, 0), np.int64)
        for row in params:
            if any(k < lo for k, (_, lo) in zip(row, free)):
                continue
            base = anchor.copy()
            for k, (u, _) in zip(row, free):
                base = base + k * np.asarray(u, dtype=np.int64)
            for i in e_indices:
                s = base + _E[i]
                if s.sum() <= radius:
                    rows.append(s)
        if not rows:
            return np.empty((0, 4), dtype=np.int64)
        out = np.unique(np.array(rows, dtype=np.int64), axis=0)
        return out
    return bases


D10 = _vec(L2, -L1)          # l2 - l1 = (-1, 0, 1, 0)
D30 = _vec(L2, -L3)          # l2 - l3 = (0, 1, 0, -1)
D130 = _vec(L2, -L1, -L3)    # l2 - l1 - l3 = (-1, 0, 0, -1)
U0, U1, U2, U3 = ((1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1))
ALL = (0, 1, 2, 3)

FAMILIES: dict[str, list[Family]] = {
    "I1": [_monotone("I1", L1, _all_states)],
    "I3": [_monotone("I3", L3, _all_states)],
    "Iprime": [
        _monotone("Iprime.l1", _vec(L1, -L2), _where(lambda X: X[:, 1] * X[:, 2] > 0)),
        _monotone("Iprime.l3", _vec(L3, -L2), _where(lambda X: X[:, 1] * X[:, 2] > 0)),
    ],
    "C2": [_convex("C2", L2, _where(lambda X: (X[:, 2] >= X[:, 3] - 1) & (X[:, 1] >= X[:, 0] - 1)))],
    "B": [
        # (i) b = (1,0,beta,0) + e_i, i in {0,2,3}: along l2 after removing one l1
        Family("B.i", _vec(L2, L2, -L1), _vec(L2, -L1), _vec(L2, -L1), _ZERO,
               _shape((1, 0, 0, 0), (0, 2, 3), [(U2, 0)])),
        # (ii) b = (0,beta,0,1) + e_i, i in {0,1,3}
        Family("B.ii", _vec(L2, L2, -L3), _vec(L2, -L3), _vec(L2, -L3), _ZERO,
               _shape((0, 0, 0, 1), (0, 1, 3), [(U1, 0)])),
        # (iii) b = (1,0,0,1) + e_i, i in 0..3
        Family("B.iii", _vec(L2, L2, -L1, -L3), _vec(L2, -L1, -L3), _vec(L2, -L1, -L3), _ZERO,
               _shape((1, 0, 0, 1), ALL)),
    ],
    "Cprime": [
        _convex("Cprime.i", D10, _shape((0, 0, 0, 0), ALL, [(U0, 2), (U2, 0)])),
        _convex("Cprime.ii", D10, _shape((0, 0, 0, 1), ALL, [(U0, 2)]), offset=tuple(-L3)),
        _convex("Cprime.iii", D30, _shape((0, 0, 0, 0), ALL, [(U3, 2), (U1, 0)])),
        _convex("Cprime.iv", D30, _shape((1, 0, 0, 0), ALL, [(U3, 2)]), offset=tuple(-L1)),
        _convex("Cprime.v", D130, _shape((0, 0, 0, 0), ALL, [(U0, 2), (U3, 2)])),
    ],
}

# The index left out of B.i / B.ii; it follows from I1/I3, C2 and B together.
EXTENSIONS: list[Family] = [
    Family("B.i+e1", _vec(L2, L2, -L1), _vec(L2, -L1), _vec(L2, -L1), _ZERO,
           _shape((1, 0, 0, 0), (1,), [(U2, 0)])),
    Family("B.ii+e2", _vec(L2, L2, -L3), _vec(L2, -L3), _vec(L2, -L3), _ZERO,
           _shape((0, 0, 0, 1), (2,), [(U1, 0)])),
]


def family_instances(fam: Family, radius: int):
    """``(bases, in_range, negative)`` masks for a family over the window of ``radius``."""
    B = fam.bases(radius)
    disp = np.array([fam.hi2, fam.hi1, fam.lo2, fam.lo1], dtype=np.int64)
    pts = B[:, None, :] + disp[None, :, :]
    negative = (pts < 0).any(axis=(1, 2))
    inside = (pts.sum(axis=2) <= radius).all(axis=1) & ~negative
    return B, inside, negative


def scan(v: ValueTable, families, name: str, tol: float = DEFAULT_TOL) -> ClassReport:
    report = ClassReport(name)
    for fam in families:
        B, inside, negative = family_instances(fam, v.radius)
        report.skipped += int((~inside & ~negative).sum())
        report.skipped_negative += int(negative.sum())
        B = B[inside]
        report.checked += len(B)
        if not len(B):
            continue
        val = {key: v.lookup(B + np.asarray(getattr(fam, key), dtype=np.int64))
               for key in ("hi2", "hi1", "lo2", "lo1")}
        missing = np.zeros(len(B), dtype=bool)
        for arr in val.values():
            missing |= np.isnan(arr)
        if missing.any():
            # states absent from a sparse table count as skipped
            report.checked -= int(missing.sum())
            report.skipped += int(missing.sum())
        lhs = val["hi2"] - val["hi1"]
        rhs = val["lo2"] - val["lo1"]
        gap = rhs - lhs
        bad = np.flatnonzero((gap > tol) & ~missing)
        for k in bad:
            report.violations.append(Violation(tuple(int(t) for t in B[k]), fam.ineq,
                                               float(lhs[k]), float(rhs[k]), float(gap[k])))
    return report


def check_I1_I3(v: ValueTable, tol: float = DEFAULT_TOL) -> tuple[ClassReport, ClassReport]:
    return scan(v, FAMILIES["I1"], "I1", tol), scan(v, FAMILIES["I3"], "I3", tol)


def check_Iprime(v: ValueTable, tol: float = DEFAULT_TOL) -> ClassReport:
    return scan(v, FAMILIES["Iprime"], "Iprime", tol)


def check_C2(v: ValueTable, tol: float = DEFAULT_TOL) -> ClassReport:
    return scan(v, FAMILIES["C2"], "C2", tol)


def check_B(v: ValueTable, tol: float = DEFAULT_TOL) -> ClassReport:
    return scan(v, FAMILIES["B"], "B", tol)


def check_Cprime(v: ValueTable, tol: float = DEFAULT_TOL) -> ClassReport:
    return scan(v, FAMILIES["Cprime"], "Cprime", tol)


def check_B_extension(v: ValueTable, tol: float = DEFAULT_TOL) -> ClassReport:
    """The two index cases left out of ``B``; they follow from ``I1``/``I3``, ``C2`` and ``B``."""
    return scan(v, EXTENSIONS, "Bext", tol)


def check_all(v: ValueTable, tol: float = DEFAULT_TOL) -> list[ClassReport]:
    return [scan(v, FAMILIES[name], name, tol) for name in CLASS_NAMES]


@dataclass
class StageReports:
    stage: int
    radius: int
    reports: list[ClassReport]
    table: ValueTable | None = None

    @property
    def clean(self) -> bool:
        return all(r.clean for r in self.reports)

    def as_dict(self):
        return {"stage": self.stage, "radius": self.radius, "clean": self.clean,
                "reports": [r.as_dict() for r in self.reports]}


def check_closure_under_L(cfg: SolverConfig, stages: int, radius: int | None = None,
                          tol: float = DEFAULT_TOL, keep_tables: bool = False) -> list[StageReports]:
    """Apply the Bellman operator ``stages`` times from ``V_0 = c`` and scan every stage.

    The table starts on ``radius + stages`` (default ``radius = window + 1``)
    so each stage is checked on its exact region, which never drops below
    ``radius``.
    """
    radius = cfg.table_radius if radius is None else int(radius)
    out = []
    for k, table in bellman_stages(cfg, stages, radius + stages,
                                   space=StateSpace(radius + stages, "simplex")):
        out.append(StageReports(k, table.radius, check_all(table, tol),
                                table if keep_tables else None))
    return out


def cost_table(c, radius: int) -> ValueTable:
    c = c if isinstance(c, CostFunction) else CostFunction(tuple(c))
    return ValueTable.from_cost(c, radius)
