"""Command line entry point: ``netdefrl <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .harness.experiment import ConfigError, ExperimentConfig, prepare_candidates, run_experiment
from .harness.oracle import SearchTooLarge, brute_force_optimum
from .harness.report import report
from .topology import GeneratorSpec, TopologyError, dump_topology, generate_topology


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _experiment(args, need: str | None = None) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.runs is not None:
        if args.runs < 1:
            raise ConfigError("--runs must be >= 1")
        cfg.runs = args.runs
    if args.out is not None:
        cfg.output_dir = args.out
    if need == "attack" and cfg.attack is None:
        raise ConfigError("this command needs an 'attack' block in the config")
    if need == "defence" and cfg.defence is None:
        raise ConfigError("this command needs a 'defence' block in the config")
    return cfg


def _print_summary(result) -> None:
    s = result.summary
    print(f"{result.config.name}: runs={s.runs} failed={s.failed} baseline={s.baseline_preserved} "
          f"avg_preserved={s.avg_preserved:.3f} no_impact={s.pct_no_impact:.1f}% "
          f"fewer_preserved={s.pct_fewer_preserved:.1f}% compromised={s.pct_compromised:.1f}% "
          f"-> {result.config.output_dir}")


def cmd_gen_topology(args) -> int:
    doc = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = GeneratorSpec(**doc)
    except TypeError as exc:
        raise ConfigError(f"generator spec: {exc}") from exc
    text = dump_topology(generate_topology(spec))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    cfg = _experiment(args)
    cfg.save_models = True
    _print_summary(run_experiment(cfg))
    return 0


def cmd_attack_eval(args) -> int:
    _print_summary(run_experiment(_experiment(args, "attack")))
    return 0


def cmd_defend_eval(args) -> int:
    _print_summary(run_experiment(_experiment(args, "defence")))
    return 0


def cmd_derive(args) -> int:
    cfg = _experiment(args, "attack")
    block = cfg.attack_block()
    if block.derive is None:
        raise ConfigError("the attack block has no 'derive' section")
    topology = cfg.load_topology()
    candidates, _ = prepare_candidates(cfg, topology)
    text = json.dumps(candidates, indent=2, sort_keys=True) + "\n"
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "candidates.json"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_brute_force(args) -> int:
    cfg = _experiment(args)
    opt = brute_force_optimum(cfg.load_topology(), cfg.env_config(), max_depth=args.depth)
    doc = {"preserved": opt.preserved, "critical_compromised": opt.critical_compromised,
           "actions": [str(a) for a in opt.actions], "explored": opt.explored}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "oracle.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    path = args.results
    if path is None:
        if args.out is None:
            raise ConfigError("give --results or --out pointing at a results.json")
        path = os.path.join(args.out, "results.json")
    if not os.path.exists(path):
        raise ConfigError(f"no results file at {path}")
    result = report(path, args.out)
    _print_summary(result)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netdefrl", description="Poisoning and defence experiments "
                                     "on a network-defence reinforcement learning game.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the (base) seed")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--runs", type=int, help="override the run count")
        p.set_defaults(func=func)
        return p

    add("gen-topology", cmd_gen_topology, "generate a random topology from a generator spec")
    add("train", cmd_train, "train defenders as configured and save their checkpoints")
    add("derive-candidates", cmd_derive, "derive FP/FN candidate lists with a surrogate")
    add("attack-eval", cmd_attack_eval, "run an experiment with an attack block")
    add("defend-eval", cmd_defend_eval, "run an experiment with a defence block")
    bf = add("brute-force", cmd_brute_force, "exhaustive optimum for a small topology")
    bf.add_argument("--depth", type=int, help="search depth (default: largest within the guard)")
    rp = add("report", cmd_report, "rewrite report files from a saved results.json")
    rp.add_argument("--results", help="path to results.json (default: <out>/results.json)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError, SearchTooLarge, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
