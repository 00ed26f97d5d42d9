"""Command line front-end: ``matchdp {solve,thresholds,verify,simulate} --config FILE``.

Exit codes: 0 success, 1 configuration error, 2 verification failure,
3 resource refusal.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import EXTRACTED, ConfigError, RunConfig, load_config
from .model import ModelError, cost_violations
from .policies import CENSORED, BaselinePolicy, ThresholdRangeError
from .simulation import SimConfig, compare_policies, estimates_to_csv, sim_horizon_for
from .solver import (ResourceLimitError, SolverConfig, extract_policy, extract_thresholds,
                     value_iteration, verify_threshold_optimality)
from .structure import check_closure_under_L

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_RESOURCE = 0, 1, 2, 3

logger = logging.getLogger("matchdp")


def solver_config(rc: RunConfig, **overrides) -> SolverConfig:
    params = dict(gamma=rc.gamma, mu=rc.mu, cost=rc.cost, window=rc.window,
                  horizon=rc.horizon, target_eps=rc.target_eps, mode=rc.mode,
                  tie_tol=rc.tie_tol, space=rc.space, mem_cap_mb=rc.mem_cap_mb)
    params.update(overrides)
    return SolverConfig(**params)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _tag(rc: RunConfig) -> str:
    return f"config_hash={rc.hash}"


def cmd_solve(rc: RunConfig, out: Path, threads: int = 1) -> int:
    t0 = time.perf_counter()
    cfg = solver_config(rc)
    sol = value_iteration(cfg)
    actions = extract_policy(sol.table, cfg)
    _write(out / "values.csv", sol.table.to_csv(_tag(rc)))
    lines = [f"# {_tag(rc)}", "x0,x1,x2,x3,a,b,c"]
    for x, ms in actions.items():
        for m in ms:
            lines.append(",".join(str(v) for v in (*x, *m)))
    _write(out / "policy.csv", "\n".join(lines) + "\n")
    window_eps = sol.eps[: sol.table.space.prefix(cfg.window)]
    manifest = {
        "command": "solve",
        "config_hash": rc.hash,
        "config": rc.canonical(),
        "horizon": sol.horizon,
        "internal_radius": sol.internal_radius,
        "state_count": sol.space_size,
        "table_radius": sol.table.radius,
        "eps_max_on_window": float(window_eps.max()),
        "eps_at_origin": float(sol.eps[0]),
        "sup_changes": sol.sup_changes,
        "files": ["values.csv", "policy.csv"],
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    _write(out / "manifest.json", _dump(manifest))
    return EXIT_OK


def cmd_thresholds(rc: RunConfig, out: Path, threads: int = 1) -> int:
    cfg = solver_config(rc)
    sol = value_iteration(cfg)
    ext = extract_thresholds(sol.table, cfg, rc.i_max)
    opt = verify_threshold_optimality(sol.table, ext.policy, cfg, tol=rc.verify_tol)
    _write(out / "thresholds.csv", ext.policy.to_csv(_tag(rc)))
    th = ext.policy.thresholds
    paired = [i for i in th if i > 0 and -i in th]
    asymmetric = [i for i in paired if th[i] != th[-i]]
    report = {
        "command": "thresholds",
        "config_hash": rc.hash,
        "horizon": sol.horizon,
        "i_max": ext.policy.i_max,
        "thresholds": {str(i): ("inf" if t is CENSORED else t) for i, t in th.items()},
        "censored": ext.censored,
        "dropped": {str(i): why for i, why in ext.dropped.items()},
        "unimodality_violations": [{"i": i, "j": j, "gap": g}
                                   for i, j, g in ext.unimodality_violations],
        "optimality": {"checked": opt.checked, "violation_count": len(opt.violations),
                       "max_gap": opt.max_gap, "tolerance": rc.verify_tol,
                       "violations": [{"state": list(x), "gap": g} for x, g in opt.violations]},
        # observational only: no symmetry i <-> -i is asserted
        "mirror_symmetric": not asymmetric,
        "mirror_asymmetric_indices": asymmetric,
    }
    _write(out / "thresholds_report.json", _dump(report))
    bad = opt.violations or ext.unimodality_violations
    return EXIT_VERIFY if bad else EXIT_OK


def cmd_verify(rc: RunConfig, out: Path, threads: int = 1) -> int:
    cfg = solver_config(rc, space="simplex")
    stages = check_closure_under_L(cfg, rc.stages, tol=rc.structure_tol)
    report = {
        "command": "verify",
        "config_hash": rc.hash,
        "stages": [s.as_dict() for s in stages],
        "clean": all(s.clean for s in stages),
    }
    _write(out / "verify_report.json", _dump(report))
    return EXIT_OK if report["clean"] else EXIT_VERIFY


def simulation_configs(rc: RunConfig) -> list[SimConfig]:
    proto = SimConfig(rc.gamma, rc.mu, rc.cost, rc.sim_x0, 1, rc.replications, rc.seed)
    H = rc.sim_horizon if rc.sim_horizon is not None else \
        sim_horizon_for(proto.cost, rc.gamma, rc.sim_x0, rc.sim_target_eps)
    base = proto.replace(horizon=H)
    cfgs = []
    for name in rc.policies:
        if name == EXTRACTED:
            cfgs.append(base.replace(policy=extracted_policy(rc, H), policy_name=EXTRACTED))
        else:
            cfgs.append(base.replace(policy=BaselinePolicy(name), policy_name=name))
    return cfgs


def extracted_policy(rc: RunConfig, sim_horizon: int):
    """Thresholds solved on the priority space, wide enough for every state reachable in the run."""
    from .model import total
    window = rc.extracted_window
    if window is None:
        window = total(rc.sim_x0) + sim_horizon
    cfg = solver_config(rc, window=window, space="priority", mode="priority_reduced")
    sol = value_iteration(cfg)
    return extract_thresholds(sol.table, cfg).policy


def cmd_simulate(rc: RunConfig, out: Path, threads: int = 1) -> int:
    ests = compare_policies(simulation_configs(rc), threads=threads)
    _write(out / "simulation.csv", estimates_to_csv(ests, _tag(rc)))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "thresholds": cmd_thresholds, "verify": cmd_verify,
            "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matchdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides [output].dir)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads; changes speed only, never results")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        # verify scans inadmissible costs too; its reports show where structure breaks
        lenient = args.command == "verify"
        rc = load_config(args.config, require_admissible=not lenient)
        if lenient:
            for problem in cost_violations(rc.cost):
                print(f"warning: {problem}", file=sys.stderr)
        out = Path(args.out if args.out is not None else rc.out_dir)
        return COMMANDS[args.command](rc, out, args.threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ThresholdRangeError as err:
        print(f"policy failure: {err}", file=sys.stderr)
        return EXIT_VERIFY
    except ModelError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimitError as err:
        print(f"resource refusal: {err}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
