"""Command line entry point (``ackradio``).

Exit codes: 0 success, 1 some row was not correct (or a family failed to
verify), 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import families
from .experiment import PROTOCOLS, ConfigError, ExperimentConfig, SweepResult, export, run_experiment
from .generators import LABEL_MODES, InvalidSpec, gen_topology

EXIT_OK, EXIT_INCORRECT, EXIT_CONFIG = 0, 1, 2


def parse_sizes(text: str) -> list[int]:
    """'2..8' -> [2..8], '4,8,16' -> [4, 8, 16]."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ValueError("empty size list")
    return out


def _emit(result: SweepResult, args) -> int:
    if args.json:
        export(result, "json", args.json)
    if args.csv:
        export(result, "csv", args.csv)
    if not args.json and not args.csv:
        sys.stdout.write(result.to_csv())
    bad = sum(not r.correct for r in result.rows)
    print(f"{len(result.rows)} rows, {bad} incorrect", file=sys.stderr)
    return EXIT_INCORRECT if bad else EXIT_OK


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    return _emit(run_experiment(cfg), args)


def cmd_sweep(args) -> int:
    try:
        sizes = parse_sizes(args.sizes)
    except ValueError as exc:
        raise ConfigError(f"bad --sizes: {exc}") from None
    cfg = ExperimentConfig(
        protocol=args.protocol,
        generator=args.topology,
        sizes=sizes,
        extra_edges=args.extra,
        labels=args.labels,
        c=args.c,
        min_phase=args.min_phase,
        family_strategy=args.strategy,
        family_seed=args.family_seed,
        seeds=list(range(args.seeds)),
        channel=args.channel,
        trace_dir=args.trace_dir,
    )
    cfg.validate()
    return _emit(run_experiment(cfg), args)


def cmd_gen_topology(args) -> int:
    try:
        g = gen_topology(args.spec, args.seed, args.labels, args.c, args.min_phase)
    except InvalidSpec as exc:
        raise ConfigError(str(exc)) from None
    data = g.topology.to_json()
    data["source"] = g.source
    text = json.dumps(data, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_family(args) -> int:
    if args.kind == "scf":
        if args.l is None:
            raise ConfigError("--l is required for scf")
        params = {"l": args.l, "c": args.c, "d": args.d, "verify": "auto" if args.verify else "none"}
    else:
        if args.k is None or args.m is None:
            raise ConfigError("--k and --m are required")
        params = {"k": args.k, "m": args.m, "strategy": args.strategy}
    try:
        fam = families.family_cache_get_or_build(args.kind, params, args.seed, args.cache_dir)
    except families.ConstructionFailed as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_INCORRECT
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps({"kind": fam.kind, "params": fam.params, "size": len(fam), "verified": fam.verified, "provenance": fam.provenance}, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(fam.to_json()))
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        result = SweepResult.from_json(Path(args.input).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read result {args.input}: {exc}") from None
    export(result, args.format, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ackradio", description="Acknowledged broadcast/gossip radio network simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def outputs(sp):
        sp.add_argument("--csv", help="write rows as CSV")
        sp.add_argument("--json", help="write the full result as JSON")

    sp = sub.add_parser("run", help="run a JSON experiment config")
    sp.add_argument("--config", required=True)
    outputs(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="sweep a protocol over generated topologies")
    sp.add_argument("--protocol", required=True, choices=PROTOCOLS)
    sp.add_argument("--topology", default=None, help="generator name (default depends on protocol)")
    sp.add_argument("--sizes", default="2..10", help="e.g. 2..64 or 4,8,16")
    sp.add_argument("--seeds", type=int, default=1, help="number of seeds, 0..K-1")
    sp.add_argument("--extra", type=int, default=0, help="extra edges for random generators")
    sp.add_argument("--labels", default="identity", choices=LABEL_MODES)
    sp.add_argument("--c", type=int, default=2)
    sp.add_argument("--min-phase", type=int, default=4)
    sp.add_argument("--strategy", default="singleton", choices=("singleton", "randomized"))
    sp.add_argument("--family-seed", type=int, default=0)
    sp.add_argument("--channel", choices=("nocd", "cd"))
    sp.add_argument("--trace-dir")
    outputs(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gen-topology", help="write a generated topology as JSON")
    sp.add_argument("--spec", required=True, help="e.g. 'random_sc_digraph(8,5)'")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--labels", default="identity", choices=LABEL_MODES)
    sp.add_argument("--c", type=int, default=2)
    sp.add_argument("--min-phase", type=int, default=4)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen_topology)

    sp = sub.add_parser("family", help="build (or load from cache) a set family")
    sp.add_argument("--kind", required=True, choices=("scf", "selective", "strongly_selective"))
    sp.add_argument("--l", type=int)
    sp.add_argument("--c", type=int, default=2)
    sp.add_argument("--d", type=float, default=4)
    sp.add_argument("--k", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--strategy", default="singleton", choices=("singleton", "randomized"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--verify", action="store_true", help="verify scf (exhaustive when small, else sampled)")
    sp.add_argument("--cache-dir")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_family)

    sp = sub.add_parser("export", help="convert a JSON result")
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", required=True, choices=("json", "csv"))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)
    return p


DEFAULT_TOPOLOGY = {
    "ack-broadcast": "random_sc_digraph",
    "ack-gossip-cd": "random_sc_digraph",
    "ack-gossip-nocd": "random_sc_digraph",
    "bidir-broadcast": "bidir_random_connected",
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.cmd == "sweep" and args.topology is None:
        args.topology = DEFAULT_TOPOLOGY[args.protocol]
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
