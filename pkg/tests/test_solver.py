import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import UNIFORM, states_up_to
from oracles import policy_value, recursive_value
from matchdp.lattice import StateSpace
from matchdp.model import ModelError, enumerate_matchings
from matchdp.policies import CENSORED, BaselinePolicy, ThresholdPolicy
from matchdp.solver import (RadiusError, ResourceLimitError, SolverConfig, ValueTable,
                            bellman_apply, bellman_min, bellman_stages, check_growth_bound,
                            expected_weight, extract_policy, extract_thresholds, horizon_for,
                            tail_bound, threshold_from_sequence, unimodality_gaps,
                            value_iteration, verify_threshold_optimality)

C = (2.0, 1.0, 1.0, 2.0)


def cfg(**kw):
    base = dict(gamma=0.5, mu=UNIFORM, cost=C, window=3, horizon=5)
    base.update(kw)
    return SolverConfig(**base)


def zero_table(radius=7):
    return ValueTable.from_function(lambda x: 0.0, radius)


def cost_table(radius=6, c=C):
    return ValueTable.from_function(lambda x: sum(a * b for a, b in zip(c, x)), radius)


def test_config_validation():
    for bad in (dict(gamma=1.0), dict(gamma=0.0), dict(window=-1), dict(horizon=0),
                dict(tie_tol=0.0), dict(mode="lazy"), dict(horizon=None, target_eps=None),
                dict(space="priority", mode="full")):
        with pytest.raises(ModelError):
            cfg(**bad)


def test_bellman_apply_examples():
    c = cfg()
    assert bellman_apply(zero_table(), (1, 2, 0, 1), (1, 0, 0), c) == 6.0
    v = cost_table()
    assert bellman_apply(v, (1, 1, 0, 0), (1, 0, 0), c) == 3.75
    assert bellman_apply(v, (1, 1, 0, 0), (0, 0, 0), c) == 5.25


def test_bellman_min_examples():
    c = cfg()
    best, arg = bellman_min(cost_table(), (1, 1, 0, 0), c, mode="full")
    assert best == 3.75 and arg == [(1, 0, 0)]
    best, arg = bellman_min(zero_table(), (1, 2, 2, 1), c, mode="full")
    assert best == 8.0 and arg == enumerate_matchings((1, 2, 2, 1), "full")
    assert bellman_min(zero_table(), (0, 0, 0, 0), c) == (0.0, [(0, 0, 0)])
    assert bellman_min(cost_table(), (0, 0, 0, 0), c) == (0.75, [(0, 0, 0)])


def test_radius_errors():
    v = cost_table(radius=3)
    with pytest.raises(RadiusError):
        bellman_apply(v, (1, 1, 1, 0), (0, 0, 0), cfg())
    with pytest.raises(RadiusError):
        v[(4, 0, 0, 0)]


def test_one_stage_example():
    sol = value_iteration(cfg(horizon=1, window=0))
    assert sol.table[(0, 0, 0, 0)] == 0.75


@pytest.mark.parametrize("mode", ["full", "priority_reduced"])
def test_matches_recursive_oracle(mode):
    c = cfg(mode=mode)
    V = recursive_value(0.5, UNIFORM, C, 5)
    table, eps, changes = value_iteration(c)
    for x in states_up_to(3):
        assert abs(table[x] - V(5, x)) <= 1e-12


def test_nonuniform_oracle_full_mode():
    mu, c = (0.1, 0.4, 0.2, 0.3), (3.0, 1.0, 2.0, 3.0)
    V = recursive_value(0.7, mu, c, 4)
    table = value_iteration(cfg(gamma=0.7, mu=mu, cost=c, horizon=4, mode="full")).table
    for x in states_up_to(3):
        assert abs(table[x] - V(4, x)) <= 1e-12


def test_stage_tables_match_scalar_bellman():
    c = cfg(mode="full")
    prev = None
    for k, table in bellman_stages(c, 3, 7):
        if prev is not None:
            for x in states_up_to(table.radius):
                assert table[x] == bellman_min(prev, x, c, mode="full")[0]
        prev = table


def test_reduced_equals_full_on_value_tables():
    c = cfg(gamma=0.8, horizon=8, window=6)
    v = value_iteration(c).table
    for x in states_up_to(6):
        full = bellman_min(v, x, c, mode="full")[0]
        red = bellman_min(v, x, c, mode="priority_reduced")[0]
        assert abs(full - red) <= 1e-9


def test_priority_space_matches_simplex():
    c = cfg(gamma=0.8, target_eps=1e-3, horizon=None, window=6)
    a = value_iteration(c)
    b = value_iteration(c.replace(space="priority"))
    for x, val in zip(map(tuple, b.table.states), b.table.values):
        assert abs(a.table[x] - val) <= 1e-12
    assert np.array_equal(b.eps, a.eps[a.table.space.locate(b.table.states)])


def test_degenerate_arrivals_closed_form():
    c = cfg(mu=(1.0, 0.0, 0.0, 0.0), horizon=None, target_eps=1e-6, window=2)
    sol = value_iteration(c)
    assert abs(sol.table[(0, 0, 0, 0)] - 4.0) <= sol.eps[0]


def test_tail_bound_properties():
    eps = [tail_bound(2.0, 0.8, 3, n) for n in range(1, 200)]
    assert all(a > b for a, b in zip(eps, eps[1:]))
    assert eps[-1] < 1e-12
    n = horizon_for(2.0, 0.8, 9, 1e-3)
    assert tail_bound(2.0, 0.8, 9, n) <= 1e-3 < tail_bound(2.0, 0.8, 9, n - 1)


def test_tail_bound_dominates_policy_tail():
    # the discarded tail of the worst policy (never match) from a loaded state
    g, x, n = 0.7, (2, 1, 0, 3), 6
    short = policy_value(g, UNIFORM, C, BaselinePolicy("match_nothing"), x, n)
    long_ = policy_value(g, UNIFORM, C, BaselinePolicy("match_nothing"), x, n + 40)
    assert long_ - short <= tail_bound(2.0, g, sum(x), n)


def test_memory_refusal():
    with pytest.raises(ResourceLimitError) as info:
        value_iteration(cfg(window=40, horizon=200, mem_cap_mb=1))
    assert info.value.estimate_mb > 1


def test_extract_policy_examples():
    c = cfg()
    pol = extract_policy(zero_table(), c, radius=3, mode="full")
    for x, ms in pol.items():
        assert ms == enumerate_matchings(x, "full")
    v = value_iteration(c).table
    assert extract_policy(v, c)[(0, 0, 0, 0)] == [(0, 0, 0)]


@pytest.mark.parametrize("s,t", [
    ([1.0, 2.0, 3.0], 0),
    ([5.0, 3.0, 4.0, 6.0], 1),
    ([3.0, 2.0, 1.0], CENSORED),
    ([2.0, 2.0, 3.0], 0),
])
def test_threshold_from_sequence(s, t):
    assert threshold_from_sequence(s, 1e-9) == t


def test_unimodality_gaps():
    assert unimodality_gaps([5.0, 3.0, 4.0, 6.0], 1, 1e-9) == []
    gaps = unimodality_gaps([5.0, 3.0, 4.0, 3.5, 6.0], 1, 1e-9)
    assert [j for j, _ in gaps] == [2]


def test_thresholds_and_verification_default_model():
    c = cfg(gamma=0.8, target_eps=1e-3, horizon=None, window=8)
    v = value_iteration(c).table
    ext = extract_thresholds(v, c)
    assert ext.unimodality_violations == []
    assert set(ext.dropped) == {-8, -7, 7, 8}
    assert verify_threshold_optimality(v, ext.policy, c, tol=1e-6).ok
    # a clearly suboptimal rule is caught
    bad = verify_threshold_optimality(v, ThresholdPolicy.constant(CENSORED, 8), c, tol=1e-6)
    assert not bad.ok and bad.max_gap > 1e-6


def test_tiny_window_censors():
    c = cfg(gamma=0.8, horizon=30, window=1, cost=(1.0, 0.0, 0.0, 1.0))
    ext = extract_thresholds(value_iteration(c).table, c)
    for i, t in ext.policy.thresholds.items():
        assert t is CENSORED or t == 0


def test_zero_table_verifies_any_policy():
    for p in (ThresholdPolicy.constant(0, 10), ThresholdPolicy.constant(CENSORED, 10)):
        assert verify_threshold_optimality(zero_table(), p, cfg(), radius=5).ok


def test_growth_bound():
    assert expected_weight((0, 0, 0, 0), BaselinePolicy("match_nothing"), 3, cfg().mu) == 4.0
    rep = check_growth_bound(cfg(window=4))
    assert rep.ok and rep.worst_ratio <= rep.cmax


def test_swap_symmetry_small():
    c = cfg(mu=(0.1, 0.4, 0.2, 0.3), cost=(3.0, 1.0, 2.0, 3.0), gamma=0.7, horizon=10)
    a = value_iteration(c).table
    b = value_iteration(c.swapped()).table
    for x in states_up_to(3):
        assert abs(a[x] - b[x[::-1]]) <= 1e-12


table_values = st.lists(st.floats(0, 10, allow_nan=False), min_size=70, max_size=70)


@settings(max_examples=30, deadline=None)
@given(table_values, table_values)
def test_contraction(u_vals, w_vals):
    c = cfg()
    u = ValueTable(StateSpace(4), np.array(u_vals))
    w = ValueTable(StateSpace(4), np.array(w_vals))
    for x in states_up_to(3):
        succ = set()
        for a, b, cc in enumerate_matchings(x, "full"):
            for j in range(4):
                y = [x[0] - a, x[1] - a - b, x[2] - b - cc, x[3] - cc]
                y[j] += 1
                succ.add(tuple(y))
        bound = c.gamma * max(abs(u[y] - w[y]) for y in succ)
        diff = abs(bellman_min(u, x, c, "full")[0] - bellman_min(w, x, c, "full")[0])
        assert diff <= bound + 1e-12


def test_value_table_csv():
    sol = value_iteration(cfg(horizon=2, window=1))
    lines = sol.table.to_csv("config_hash=x").splitlines()
    assert lines[0] == "# config_hash=x" and lines[1] == "x0,x1,x2,x3,value,eps"
    assert len(lines) == 2 + len(sol.table)
    assert all(float(line.split(",")[4]) >= 0 for line in lines[2:])
    assert not math.isnan(sol.table.lookup(np.array([[0, 0, 0, 0]]))[0])
    assert math.isnan(sol.table.lookup(np.array([[9, 0, 0, 0]]))[0])
