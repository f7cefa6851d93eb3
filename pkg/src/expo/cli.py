"""Command-line entry point: ``expo run | replay | oracle tsp | domain generate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, load_config


def _seeds(text: str) -> list[int]:
    return [int(s) for s in text.replace(" ", "").split(",") if s]


def cmd_run(args) -> int:
    from .runner import plan, run_experiment

    overrides = {"task": args.task, "method": args.method, "parallelism": args.parallelism,
                 "seeds": _seeds(args.seeds) if args.seeds else None, "output_dir": args.output_dir}
    cfg = load_config(args.config, overrides)
    if args.dry_run:
        print(plan(cfg))
        return 0
    result = run_experiment(cfg)
    for r in result.results:
        status = r["status"] if r["status"] == "ok" else f"FAILED ({r['error']})"
        print(f"rep {r['tag']}: {status}")
    print(f"run directory: {result.run_dir}")
    return result.exit_code


def cmd_replay(args) -> int:
    """Rerun a finished experiment with its best saved arm fixed for the whole run."""
    from .config import from_dict
    from .runner import run_experiment

    run_dir = Path(args.run_dir)
    data = yaml.safe_load((run_dir / "config.resolved").read_text(encoding="utf-8"))
    data.update(method="fixed_prompt_replay", replay_from=str(run_dir),
                output_dir=str(args.output_dir or run_dir / "replay"))
    cfg = from_dict(data).validate()
    result = run_experiment(cfg)
    print(f"run directory: {result.run_dir}")
    return result.exit_code


def _read_nodes(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return np.asarray(json.loads(text), dtype=np.float64)
    return np.loadtxt(_data_lines(text), delimiter=",", ndmin=2)


def _data_lines(text: str):
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def cmd_oracle(args) -> int:
    from .environments import tsp_brute_force, tsp_oracle

    nodes = _read_nodes(args.nodes)
    if args.method == "brute" or (args.method == "auto" and len(nodes) <= 10):
        tour, length = tsp_brute_force(nodes)
        method = "brute_force"
    else:
        tour, length = tsp_oracle(nodes)
        method = "held_karp"
    print(json.dumps({"method": method, "n": len(nodes), "tour": [int(i) for i in tour], "length": length}))
    return 0


def cmd_domain(args) -> int:
    from .runner import build_domain

    cfg = load_config(args.config)
    cfg.domain.source = "generate"
    if args.n_rephrase is not None:
        cfg.domain.n_rephrase = args.n_rephrase
    domain = build_domain(cfg)
    out = Path(args.out or Path(cfg.output_dir) / "domain.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    domain.save(out)
    print(f"{domain.k1} descriptions x {domain.k2} instructions = {domain.k} arms -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="expo", description="Adversarial-bandit meta-prompt optimization.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("--config", required=True)
    r.add_argument("--task", choices=["lr", "tsp", "mab"])
    r.add_argument("--method")
    r.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
    r.add_argument("--parallelism", type=int)
    r.add_argument("--output-dir")
    r.add_argument("--dry-run", action="store_true", help="validate and print the resolved plan")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="rerun with the saved best arm of a previous run")
    rp.add_argument("--run-dir", required=True)
    rp.add_argument("--output-dir")
    rp.set_defaults(func=cmd_replay)

    o = sub.add_parser("oracle", help="exact solvers")
    osub = o.add_subparsers(dest="oracle", required=True)
    t = osub.add_parser("tsp", help="optimal tour for a node file (CSV x,y per line, or JSON list)")
    t.add_argument("--nodes", required=True)
    t.add_argument("--method", choices=["auto", "brute", "dp"], default="auto")
    t.set_defaults(func=cmd_oracle)

    d = sub.add_parser("domain", help="prompt-domain tools")
    dsub = d.add_subparsers(dest="domain_cmd", required=True)
    g = dsub.add_parser("generate", help="rephrase the template texts into a domain file")
    g.add_argument("--config", required=True)
    g.add_argument("--n-rephrase", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_domain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
