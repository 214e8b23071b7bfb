"""Command-line entry point: gen, simulate, sweep, compare.

Exit codes: 0 success (target reached), 1 configuration error,
2 target not reached.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import engine
from .policies import PolicyError, parse_policy, parse_policy_list
from .power import TraceError
from .scenario import (GenerationParams, ScenarioError, bind_traces, dump_scenario,
                       generate_synthetic,
                       load_scenario_with_traces, load_traces, save_scenario, save_traces,
                       synthesize_traces)

log = logging.getLogger("powertrip")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_REACHED = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _setup_logging():
    level = os.environ.get("POWERTRIP_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _write(path, text: str):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e.strerror}") from None


def _load(args):
    cfg, traces = load_scenario_with_traces(args.scenario)
    if getattr(args, "duplex", None):
        cfg = dataclasses.replace(cfg, network=dataclasses.replace(cfg.network, duplex=args.duplex))
    return cfg, traces


def cmd_gen(args) -> int:
    if args.sites < 1:
        raise ConfigError("--sites must be >= 1")
    cfg = generate_synthetic(args.sites, args.seed, GenerationParams())
    out = Path(args.out)
    if args.traces:
        tpath = Path(args.traces)
        if args.synth_traces:
            save_traces(synthesize_traces(args.synth_traces, args.seed), tpath)
        table = load_traces(tpath)
        try:
            ref = os.path.relpath(tpath, out.parent)
        except ValueError:
            ref = str(tpath.resolve())
        cfg = bind_traces(cfg, table, ref)
    elif args.synth_traces:
        raise ConfigError("--synth-traces needs --traces PATH to write to")
    _write(out, dump_scenario(cfg))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, traces = _load(args)
    policy = parse_policy(args.policy) if args.policy else cfg.policy
    policy.validate(len(cfg.sites))
    res = engine.simulate(cfg, policy, traces, args.seed, args.trace_wrap)
    if args.out:
        text = engine.result_json(res) if args.format == "json" else engine.rounds_csv([res])
        _write(args.out, text)
    tta = "none" if res.time_to_accuracy_s is None else f"{res.time_to_accuracy_s:.3f}"
    print(f"policy={res.policy} tta_s={tta} rounds={len(res.rounds)} "
          f"final_accuracy={res.final_accuracy:.4f} reached={str(res.reached_target).lower()}")
    return EXIT_OK if res.reached_target else EXIT_NOT_REACHED


def cmd_sweep(args) -> int:
    cfg, traces = _load(args)
    n = len(cfg.sites)
    if args.k_step < 1 or not 1 <= args.k_min <= args.k_max <= n:
        raise ConfigError(f"need 1 <= k-min <= k-max <= {n} and k-step >= 1")
    ks = range(args.k_min, args.k_max + 1, args.k_step)
    sweep = engine.static_sweep(cfg, ks, traces, args.seed, args.trace_wrap, args.workers)
    text = engine.sweep_csv(sweep)
    if args.out:
        _write(args.out, text)
    sys.stdout.write(text)
    print(f"k_star={sweep.k_star if sweep.k_star is not None else 'none'}")
    return EXIT_OK if sweep.k_star is not None else EXIT_NOT_REACHED


def cmd_compare(args) -> int:
    cfg, traces = _load(args)
    policies = parse_policy_list(args.policies)
    for p in policies:
        p.validate(len(cfg.sites))
    rows, results = engine.compare_policies(cfg, policies, traces, args.seed,
                                            args.trace_wrap, args.workers)
    text = engine.summary_csv(rows)
    if args.out:
        _write(args.out, text)
    if args.rounds_out:
        _write(args.rounds_out, engine.rounds_csv(results))
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="powertrip", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic scenario")
    g.add_argument("--sites", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--traces", help="bind sites round-robin to the traces in this CSV")
    g.add_argument("--synth-traces", type=int, metavar="N",
                   help="first write N synthetic traces to --traces")
    g.set_defaults(func=cmd_gen)

    def common(sp):
        sp.add_argument("--scenario", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out")
        sp.add_argument("--trace-wrap", action="store_true",
                        help="replay traces cyclically instead of holding the last sample")
        sp.add_argument("--duplex", choices=("single", "half"))

    s = sub.add_parser("simulate", help="run one policy")
    common(s)
    s.add_argument("--policy", help="name[:key=value...], defaults to the scenario's policy")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="static top-k sweep")
    common(w)
    w.add_argument("--k-min", type=int, required=True)
    w.add_argument("--k-max", type=int, required=True)
    w.add_argument("--k-step", type=int, default=1)
    w.add_argument("--workers", type=int, default=None)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="compare policies on one scenario")
    common(c)
    c.add_argument("--policies", required=True)
    c.add_argument("--rounds-out", help="per-round CSV for every policy")
    c.add_argument("--workers", type=int, default=None)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, PolicyError, TraceError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except engine.StallError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
