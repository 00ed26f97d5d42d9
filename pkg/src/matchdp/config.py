"""Run configuration files (TOML) for the command line front-end.

Numbers are parsed as decimals and must survive conversion to binary
floating point unchanged (shortest round-trip), otherwise parsing fails.
``gamma``, ``mu`` and ``cost`` have no defaults.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .model import MODES, validate_model
from .policies import BASELINES

EXTRACTED = "extracted"


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path or line:
            where = f"{path or '<config>'}:{line if line else '?'}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class RunConfig:
    mu: tuple[float, ...]
    cost: tuple[float, ...]
    gamma: float
    window: int
    horizon: int | None = None
    target_eps: float | None = None
    mode: str = "priority_reduced"
    space: str = "simplex"
    tie_tol: float = 1e-9
    verify_tol: float = 1e-6
    structure_tol: float = 1e-9
    stages: int = 5
    i_max: int | None = None
    sim_x0: tuple[int, ...] = (0, 0, 0, 0)
    sim_horizon: int | None = None
    sim_target_eps: float | None = 1e-3
    replications: int = 10_000
    seed: int = 0
    policies: tuple[str, ...] = (EXTRACTED, "full_greedy", "never_l2", "l2_first")
    extracted_window: int | None = None
    out_dir: str = "matchdp-out"
    mem_cap_mb: float | None = None
    source: str | None = field(default=None, compare=False)

    def canonical(self) -> dict:
        """Everything that affects results, in a stable form (output location excluded)."""
        d = {k: getattr(self, k) for k in self.__dataclass_fields__
             if k not in ("out_dir", "source", "mem_cap_mb")}
        return json.loads(json.dumps(d, sort_keys=True))

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SCHEMA = {
    "model": {"mu", "cost"},
    "solver": {"gamma", "window", "horizon", "target_eps", "mode", "space", "tie_tol",
               "verify_tol", "structure_tol", "stages", "i_max", "mem_cap_mb"},
    "simulation": {"x0", "horizon", "target_eps", "replications", "seed", "policies",
                   "extracted_window"},
    "output": {"dir"},
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    lines = text.splitlines()
    start = None
    for n, ln in enumerate(lines):
        if re.match(rf"^\s*\[\s*{re.escape(section)}\s*\]", ln):
            start = n
            break
    if start is None:
        return None
    if key is None:
        return start + 1
    for n in range(start + 1, len(lines)):
        if re.match(r"^\s*\[", lines[n]):
            break
        if re.match(rf"^\s*{re.escape(key)}\s*=", lines[n]):
            return n + 1
    return start + 1


class _Reader:
    def __init__(self, data: dict, text: str, path: str | None):
        self.data, self.text, self.path = data, text, path

    def fail(self, msg, section, key=None):
        raise ConfigError(msg, _line_of(self.text, section, key), self.path)

    def get(self, section, key, kind, required=False, default=None):
        block = self.data.get(section, {})
        if key not in block:
            if required:
                line = _line_of(self.text, section)
                raise ConfigError(f"missing required key [{section}].{key} (no default)",
                                  line, self.path)
            return default
        raw = block[key]
        try:
            return kind(raw)
        except (TypeError, ValueError) as err:
            self.fail(f"[{section}].{key}: {err}", section, key)


def _number(raw) -> float:
    if isinstance(raw, bool):
        raise ValueError(f"expected a number, got {raw!r}")
    if isinstance(raw, int):
        f = float(raw)
        if int(f) != raw:
            raise ValueError(f"{raw} is not exactly representable as a float")
        return f
    if isinstance(raw, Decimal):
        if not raw.is_finite():
            raise ValueError(f"non-finite number {raw}")
        f = float(raw)
        if not math.isfinite(f):
            raise ValueError(f"{raw} overflows a float")
        try:
            if Decimal(repr(f)) != raw:
                raise ValueError(f"{raw} does not round-trip through a binary float "
                                 f"(nearest is {f!r})")
        except InvalidOperation as err:  # pragma: no cover
            raise ValueError(str(err))
        return f
    raise ValueError(f"expected a number, got {raw!r}")


def _integer(raw) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ValueError(f"expected an integer, got {raw!r}")
    return raw


def _vector(n, item):
    def conv(raw):
        if not isinstance(raw, list) or len(raw) != n:
            raise ValueError(f"expected a list of {n} values, got {raw!r}")
        return tuple(item(v) for v in raw)
    return conv


def _choice(options):
    def conv(raw):
        if raw not in options:
            raise ValueError(f"expected one of {tuple(options)}, got {raw!r}")
        return raw
    return conv


def _policies(raw):
    if not isinstance(raw, list) or not raw:
        raise ValueError("expected a nonempty list of policy names")
    allowed = (EXTRACTED,) + BASELINES
    for p in raw:
        if p not in allowed:
            raise ValueError(f"unknown policy {p!r}; expected names from {allowed}")
    if len(set(raw)) != len(raw):
        raise ValueError("policy names must be distinct")
    return tuple(raw)


def parse_config(text: str, path: str | None = None, require_admissible: bool = True) -> RunConfig:
    """Parse and validate a run configuration.

    With ``require_admissible=False`` the cost admissibility conditions are
    not enforced, so structural scans can be run on costs that violate them.
    """
    try:
        data = tomllib.loads(text, parse_float=Decimal)
    except tomllib.TOMLDecodeError as err:
        m = re.search(r"line (\d+)", str(err))
        raise ConfigError(f"invalid TOML: {err}", int(m.group(1)) if m else None, path) from None
    for section, block in data.items():
        if section not in _SCHEMA or not isinstance(block, dict):
            raise ConfigError(f"unknown section [{section}]", _line_of(text, section), path)
        for key in block:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key [{section}].{key}", _line_of(text, section, key), path)
    r = _Reader(data, text, path)
    mu = r.get("model", "mu", _vector(4, _number), required=True)
    cost = r.get("model", "cost", _vector(4, _number), required=True)
    gamma = r.get("solver", "gamma", _number, required=True)
    window = r.get("solver", "window", _integer, required=True)
    horizon = r.get("solver", "horizon", _integer)
    target = r.get("solver", "target_eps", _number)
    if horizon is None and target is None:
        r.fail("[solver] needs horizon or target_eps", "solver")
    if horizon is not None and target is not None:
        r.fail("[solver] takes horizon or target_eps, not both", "solver", "target_eps")
    problems = validate_model(mu, cost)
    if not require_admissible:
        problems = [p for p in problems if not p.startswith("admissibility")]
    if problems:
        r.fail("model violates: " + "; ".join(problems), "model",
               "cost" if any(p.startswith(("c", "admiss")) for p in problems) else "mu")
    if not 0 < gamma < 1:
        r.fail(f"0 < gamma < 1 fails (gamma = {gamma})", "solver", "gamma")
    if window < 0:
        r.fail("window must be >= 0", "solver", "window")
    if horizon is not None and horizon < 1:
        r.fail("horizon must be >= 1", "solver", "horizon")
    if target is not None and not target > 0:
        r.fail("target_eps must be > 0", "solver", "target_eps")

    sim_h = r.get("simulation", "horizon", _integer)
    sim_t = r.get("simulation", "target_eps", _number)
    if sim_h is not None and sim_t is not None:
        r.fail("[simulation] takes horizon or target_eps, not both", "simulation", "target_eps")
    if sim_h is None and sim_t is None:
        sim_t = 1e-3
    reps = r.get("simulation", "replications", _integer, default=10_000)
    if reps < 1:
        r.fail("replications must be >= 1", "simulation", "replications")
    seed = r.get("simulation", "seed", _integer, default=0)
    if not 0 <= seed < 2**64:
        r.fail("seed must lie in [0, 2^64)", "simulation", "seed")
    x0 = r.get("simulation", "x0", _vector(4, _integer), default=(0, 0, 0, 0))
    if min(x0) < 0:
        r.fail("x0 must be a state (nonnegative counts)", "simulation", "x0")
    stages = r.get("solver", "stages", _integer, default=5)
    if stages < 0:
        r.fail("stages must be >= 0", "solver", "stages")
    mode = r.get("solver", "mode", _choice(MODES), default="priority_reduced")
    space = r.get("solver", "space", _choice(("simplex", "priority")), default="simplex")
    if space == "priority" and mode == "full":
        r.fail("full minimization needs space = 'simplex'", "solver", "space")
    cfg = RunConfig(
        mu=mu, cost=cost, gamma=gamma, window=window, horizon=horizon, target_eps=target,
        mode=mode, space=space,
        tie_tol=r.get("solver", "tie_tol", _number, default=1e-9),
        verify_tol=r.get("solver", "verify_tol", _number, default=1e-6),
        structure_tol=r.get("solver", "structure_tol", _number, default=1e-9),
        stages=stages,
        i_max=r.get("solver", "i_max", _integer),
        mem_cap_mb=r.get("solver", "mem_cap_mb", _number),
        sim_x0=x0, sim_horizon=sim_h, sim_target_eps=sim_t, replications=reps, seed=seed,
        policies=r.get("simulation", "policies", _policies,
                       default=(EXTRACTED, "full_greedy", "never_l2", "l2_first")),
        extracted_window=r.get("simulation", "extracted_window", _integer),
        out_dir=r.get("output", "dir", str, default="matchdp-out"),
        source=path,
    )
    for key in ("tie_tol", "verify_tol", "structure_tol"):
        if not getattr(cfg, key) > 0:
            r.fail(f"{key} must be > 0", "solver", key)
    return cfg


def load_config(path, require_admissible: bool = True) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}", None, str(path)) from None
    return parse_config(text, str(path), require_admissible)
