import itertools

import pytest

UNIFORM = (0.25, 0.25, 0.25, 0.25)
GAMMAS = (0.5, 0.7, 0.8)
COSTS = ((2.0, 1.0, 1.0, 2.0), (3.0, 1.0, 2.0, 3.0), (1.0, 0.0, 0.0, 1.0))
GRID = list(itertools.product(GAMMAS, COSTS))


def states_up_to(radius):
    for n in range(radius + 1):
        for x0 in range(n + 1):
            for x1 in range(n - x0 + 1):
                for x2 in range(n - x0 - x1 + 1):
                    yield (x0, x1, x2, n - x0 - x1 - x2)


def brute_matchings(x):
    """Every feasible (a, b, c), found by a plain triple loop."""
    out = []
    for a in range(x[0] + 1):
        for b in range(x[1] + 1):
            for c in range(x[3] + 1):
                if a + b <= x[1] and b + c <= x[2]:
                    out.append((a, b, c))
    return out


def grid_id(cell):
    g, c = cell
    return f"g{g}-c{'_'.join(str(int(v)) for v in c)}"


@pytest.fixture(scope="session")
def solution_cache():
    """Solutions shared across test modules, keyed by solver config."""
    from matchdp.solver import value_iteration
    cache = {}

    def get(cfg):
        if cfg not in cache:
            cache[cfg] = value_iteration(cfg)
        return cache[cfg]
    return get


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    """Remember an acceptance result for the summary, then assert it."""
    ACCEPTANCE[number] = (bool(ok), detail)
    assert ok, f"criterion {number} failed: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
