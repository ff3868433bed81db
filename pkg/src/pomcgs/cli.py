"""Command-line front end.

    pomcgs solve CONFIG
    pomcgs eval POLICY CONFIG --episodes N --seed S [--force]
    pomcgs export POLICY --format dot [-o FILE]
    pomcgs inspect POLICY

``POMCGS_OUTPUT_DIR`` overrides the configured output directory and
``POMCGS_THREADS`` the evaluation thread count.  Exit codes: 0 success,
2 configuration or usage error, 3 model fingerprint mismatch.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import fsc as fsc_mod
from .config import ConfigError, load_config
from .heuristics import VTable, train_vmdp
from .core import PHASE_QLEARN, child_rng
from .solver import solve

EXIT_OK, EXIT_CONFIG, EXIT_FINGERPRINT = 0, 2, 3
CSV_HEADER = ("iter", "upper", "lower", "nodes", "seconds")

log = logging.getLogger("pomcgs")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _threads(default):
    env = os.environ.get("POMCGS_THREADS")
    if env is None:
        return default
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"POMCGS_THREADS={env!r} is not an integer") from None
    if n < 1:
        raise ConfigError("POMCGS_THREADS must be >= 1")
    return n


def _load_or_train_vtable(rc, model):
    path = rc.vtable_cache
    want = rc.qlearning.describe()
    if rc.reuse_vtable and path.exists():
        table = VTable.loads(path.read_text())
        if table.fingerprint == model.fingerprint() and table.info.get("qlearning") == want:
            log.info("reusing heuristic table %s", path)
            return table, "cache"
        log.info("heuristic cache %s does not match this model/config; retraining", path)
    table = train_vmdp(model, rc.qlearning, child_rng(rc.solver.seed, PHASE_QLEARN))
    table.info["config_hash"] = rc.config_hash()
    table.info["seed"] = str(rc.seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table.dumps())
    return table, "trained"


def write_bounds_csv(path: Path, bounds):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for b in bounds:
            w.writerow([b.iteration, repr(b.upper), repr(b.lower), b.nodes, f"{b.seconds:.3f}"])


def cmd_solve(args) -> int:
    rc = load_config(args.config)
    if os.environ.get("POMCGS_OUTPUT_DIR"):
        rc.output_dir = Path(os.environ["POMCGS_OUTPUT_DIR"])
    cfg = dataclasses.replace(rc.solver, n_jobs=_threads(os.cpu_count() or 1))
    model = rc.make_model()
    out = rc.output_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    vtable, vt_source = _load_or_train_vtable(rc, model)
    fsc, planner = solve(model, cfg, vtable=vtable, qcfg=rc.qlearning, return_planner=True)
    elapsed = time.perf_counter() - t0
    chash = rc.config_hash()
    fsc.info["config_hash"] = chash
    fsc.info["seed"] = str(rc.seed)
    fsc.info["env"] = rc.env_name
    fsc_mod.save(fsc, rc.policy_path, include_beliefs=rc.include_beliefs)
    write_bounds_csv(out / "bounds.csv", fsc.bounds)
    final = fsc.bounds[-1]
    converged = final.upper - final.lower <= cfg.epsilon
    if planner.iterations == 0 and not converged:
        log.warning("budget exhausted before any improvement pass; artifacts hold the initial bounds")
    summary = {
        "config_hash": chash,
        "seed": rc.seed,
        "env": rc.env_name,
        "fingerprint": model.fingerprint(),
        "upper": final.upper,
        "lower": final.lower,
        "gap": final.upper - final.lower,
        "nodes": len(fsc),
        "nodes_before_prune": final.nodes,
        "iterations": planner.iterations,
        "converged": bool(converged),
        "seconds": round(elapsed, 3),
        "vtable": vt_source,
        "policy": str(rc.policy_path),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"upper {final.upper:.4f} lower {final.lower:.4f} nodes {len(fsc)} "
          f"iterations {planner.iterations} ({elapsed:.1f}s) -> {rc.policy_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.episodes < 1:
        raise ConfigError(f"--episodes must be >= 1, got {args.episodes}")
    rc = load_config(args.config)
    model = rc.make_model()
    policy = fsc_mod.load(args.policy)
    if policy.fingerprint != model.fingerprint() and not args.force:
        print(f"error: policy was solved for {policy.fingerprint!r} but the config builds "
              f"{model.fingerprint()!r} (use --force to evaluate anyway)", file=sys.stderr)
        return EXIT_FINGERPRINT
    res = fsc_mod.run_episodes(policy, model, args.episodes, seed=args.seed,
                               epsilon=rc.solver.epsilon)
    r = res["returns"]
    se = float(r.std(ddof=1) / math.sqrt(len(r))) if len(r) > 1 else 0.0
    print(f"mean return {r.mean():.4f} +/- {se:.4f} (episodes {len(r)}, seed {args.seed})")
    print(f"open-leaf rate {res['open_leaf'].mean():.4f}")
    print(f"mean length {res['lengths'].mean():.2f}")
    return EXIT_OK


def cmd_export(args) -> int:
    if args.format != "dot":
        raise ConfigError(f"unknown export format {args.format!r} (supported: dot)")
    policy = fsc_mod.load(args.policy)
    text = fsc_mod.export_dot(policy)
    target = Path(args.output) if args.output else Path(args.policy).with_suffix(".dot")
    target.write_text(text)
    print(target)
    return EXIT_OK


def cmd_inspect(args) -> int:
    policy = fsc_mod.load(args.policy)
    root = policy.nodes[policy.n0]
    n_edges = sum(len(nd.eta) for nd in policy.nodes.values())
    print(f"model      {policy.fingerprint}")
    print(f"nodes      {len(policy)} (reachable {len(fsc_mod.reachable(policy))})")
    print(f"edges      {n_edges}")
    print(f"start      {policy.n0} psi={root.psi} N={root.N} V={root.V:.4f}")
    print(f"blind      {policy.blind_action}")
    if policy.bounds:
        b = policy.bounds[-1]
        print(f"bounds     upper {b.upper:.4f} lower {b.lower:.4f} (iteration {b.iteration})")
    for key in ("config_hash", "seed", "qlearning"):
        if key in policy.info:
            print(f"{key:<10} {policy.info[key]}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="pomcgs", description="Offline POMDP solving into finite-state controllers.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve the configured problem")
    s.add_argument("config")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="execute a policy on the configured model")
    e.add_argument("policy")
    e.add_argument("config")
    e.add_argument("--episodes", type=int, default=10_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--force", action="store_true", help="ignore a model fingerprint mismatch")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="write the policy graph")
    x.add_argument("policy")
    x.add_argument("--format", default="dot")
    x.add_argument("-o", "--output")
    x.set_defaults(func=cmd_export)

    i = sub.add_parser("inspect", help="summarize a policy file")
    i.add_argument("policy")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (fsc_mod.PolicyFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
