"""Command-line entry point.

Subcommands: ``run`` (one ensemble from a config file), ``sweep`` (axis
from config), ``graph`` (generate and export a topology), ``check``
(decomposition and condition oracles on a small config), ``replicate``
(bundled scenario configs, fig1..fig7). Exit codes: 1 for configuration
errors, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .analysis import check_conditions, conditional_mean_noise, decompose
from .config import (
    ExperimentConfig,
    parse_config_file,
    parse_topology_compact,
    serialize_config,
)
from .errors import ConfigError, SocialSamplingError
from .harness import emit_results, replicate_configs, run_ensemble, sweep
from .protocol import NetworkState, init_state, step
from .simplex import OpinionSample
from .topology import generate, write_edgelist


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="socialsampling",
        description="Simulate social-sampling histogram estimation over networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required,
                       help="flat key=value config file")
        p.add_argument("--out", type=Path, default=Path("results"),
                       help="output directory (default: ./results)")
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument("--trials", type=int, default=None, help="override trial count")
        p.add_argument("--horizon", type=int, default=None, help="override horizon")
        p.add_argument("--stride", default=None, help="override record stride (log or int)")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--engine", default=None, help="auto | numba | numpy")
        p.add_argument("--paper-delta", action="store_true",
                       help="uncapped nominal step sizes (replication mode)")
        p.add_argument("--per-trial", action="store_true", help="also write per-trial CSVs")
        p.add_argument("--checkpoints", action="store_true",
                       help="also write trial 0's replayable trajectory checkpoints")

    common(sub.add_parser("run", help="run one ensemble"))
    common(sub.add_parser("sweep", help="run a one-axis sweep"))

    g = sub.add_parser("graph", help="generate a topology and export its edge list")
    g.add_argument("--config", type=Path, default=None, help="config supplying the topology")
    g.add_argument("--spec", default=None, help="compact topology spec, e.g. grid:5x5")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True, help="edge-list output file")

    c = sub.add_parser("check", help="run decomposition and condition oracles")
    c.add_argument("--config", type=Path, default=None,
                   help="small config to check (default: built-in 2-node path)")
    c.add_argument("--rounds", type=int, default=40, help="recorded rounds per variant")

    r = sub.add_parser("replicate", help="run a bundled scenario (fig1..fig7)")
    r.add_argument("figure", help="fig1 | fig2 | ... | fig7")
    common(r, config_required=False)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if args.seed is not None:
        updates["base_seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.horizon is not None:
        updates["horizon"] = args.horizon
    if args.stride is not None:
        updates["record_stride"] = "log" if args.stride == "log" else int(args.stride)
    if args.engine is not None:
        updates["engine"] = args.engine
    if args.paper_delta:
        updates["paper_delta"] = True
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config_file(args.config), args)
    result = run_ensemble(cfg, threads=args.threads)
    for path in emit_results(result, args.out, stem=args.config.stem,
                             per_trial=args.per_trial):
        print(path)
    if args.checkpoints:
        from .harness import run_trial

        cp_path = args.out / f"{args.config.stem}_trial0000.checkpoints.jsonl"
        run_trial(cfg, 0, checkpoint_path=cp_path)
        print(cp_path)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _apply_overrides(parse_config_file(args.config), args)
    if cfg.sweep_axis is None:
        raise ConfigError("field 'sweep': sweep subcommand needs a sweep axis")
    for result in sweep(cfg, threads=args.threads):
        for path in emit_results(result, args.out,
                                 stem=f"{args.config.stem}_{result.label}",
                                 per_trial=args.per_trial):
            print(path)
    return 0


def _cmd_graph(args) -> int:
    if args.spec is not None:
        spec = parse_topology_compact(args.spec)
    elif args.config is not None:
        spec = parse_config_file(args.config).topology
    else:
        raise ConfigError("graph subcommand needs --spec or --config")
    spec = dataclasses.replace(spec, seed=args.seed)
    g = generate(spec)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_edgelist(g, args.out)
    print(f"{args.out}  ({spec.describe()}: n={g.n} m={g.m})")
    return 0


def _cmd_check(args) -> int:
    if args.config is not None:
        cfg = parse_config_file(args.config)
        graph = generate(cfg.topology, np.random.default_rng(cfg.base_seed))
        M = cfg.alphabet
    else:
        graph = generate(parse_topology_compact("grid:1x2"))
        M = 2
    failures = 0
    rng = np.random.default_rng(0)
    X = rng.integers(1, M + 1, graph.n)
    base_state = init_state(OpinionSample(X, M))
    from .protocol import Averaging, CensoredExchange, DecayingAveraging, harmonic

    for variant, schedule in (
        (Averaging(), None),
        (DecayingAveraging(), harmonic(10.0)),
        (CensoredExchange(), harmonic(2.0)),
    ):
        state = base_state
        records = []
        srng = np.random.default_rng(1)
        for _ in range(args.rounds):
            state, rec = step(state, variant, schedule, graph, srng)
            records.append(rec)
        ok = True
        try:
            for rec in records:
                decompose(rec, variant)
        except SocialSamplingError as exc:
            ok = False
            print(f"FAIL {variant.name}: reconstruction: {exc}")
        enum_ok = True
        for rec in records[:: max(1, len(records) // 8)]:
            em = conditional_mean_noise(
                NetworkState(rec.t, rec.Q_before), variant, schedule, graph
            )
            if np.abs(em).max() > 1e-12:
                enum_ok = False
        report = check_conditions(records, variant, schedule, graph)
        lines = {
            "reconstruction": ok,
            "noise_mean_zero": enum_ok,
            "condition1": report.mixing_ok,
            "condition3": report.dyn_ok,
            "condition4_finite": report.perturbation_finite,
        }
        if variant.name == "censored_exchange":
            lines["condition5_mass"] = report.mass_ok
        for name, passed in lines.items():
            print(f"{'PASS' if passed else 'FAIL'} {variant.name}: {name}")
            failures += 0 if passed else 1
    return 0 if failures == 0 else 2


def _cmd_replicate(args) -> int:
    bundles = replicate_configs(args.figure)
    for stem, cfg in bundles:
        cfg = _apply_overrides(cfg, args)
        if cfg.sweep_axis is not None:
            for result in sweep(cfg, threads=args.threads):
                for path in emit_results(result, args.out, stem=f"{stem}_{result.label}",
                                         per_trial=args.per_trial):
                    print(path)
        else:
            result = run_ensemble(cfg, threads=args.threads)
            for path in emit_results(result, args.out, stem=stem, per_trial=args.per_trial):
                print(path)
        print(f"# {stem}: config = {serialize_config(cfg).strip().replace(chr(10), '; ')}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage problems; those are config errors here
        return 1 if exc.code not in (0, None) else 0
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "graph": _cmd_graph,
        "check": _cmd_check,
        "replicate": _cmd_replicate,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SocialSamplingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
