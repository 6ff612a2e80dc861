"""Command-line entry point: ``anchor serve|provision|attack|explore|bench``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .entropy import default_pool
from .prg import Prg
from .service.registry import STORAGE_KEY_ENV, Kind, Registry, storage_key_from_env

log = logging.getLogger("anchor")


def _storage_key(args) -> bytes:
    key = storage_key_from_env()
    if key is not None:
        return key
    if getattr(args, "test_mode", False):
        log.warning("no %s set; using an ephemeral storage key (test mode)", STORAGE_KEY_ENV)
        return os.urandom(32)
    raise SystemExit(f"error: set {STORAGE_KEY_ENV} to 64 hex characters (or pass --test-mode)")


def cmd_serve(args) -> int:
    from .service.server import serve
    serve(args.listen, args.registry, args.policy, _storage_key(args), args.entropy_script)
    return 0


def cmd_provision(args) -> int:
    registry = Registry(args.registry, _storage_key(args))
    prg = Prg.from_pool(default_pool(args.entropy_script))
    otk = prg.read(32)
    registry.provision(args.device, Kind(args.kind), otk)
    print(otk.hex())
    return 0


def cmd_attack(args) -> int:
    from .harness import ScenarioConfig, run_scenario
    cfg = ScenarioConfig(flips=args.flips, forgeries=args.forgeries, encrypt=args.encrypt,
                         mutants=frozenset(args.mutant or ()))
    report = run_scenario(args.scenario, cfg)
    print(report.dumps() if args.json else report.to_text())
    return 0 if report.passed else 1


def cmd_explore(args) -> int:
    from .harness import ExploreConfig, ExploreStats, explore_bounded
    cfg = ExploreConfig(depth=args.depth, mutants=frozenset(args.mutant or ()))
    stats = ExploreStats()
    violations = explore_bounded(config=cfg, stop_at_first=args.stop_at_first, stats=stats)
    if args.json:
        print(json.dumps({"depth": args.depth, "mutants": sorted(cfg.mutants),
                          "states": stats.states, "violations": [v.to_json() for v in violations]},
                         indent=2))
    else:
        print(f"explored depth {args.depth}, mutants {sorted(cfg.mutants) or 'none'}: "
              f"{stats.states} states, {len(violations)} violation(s)")
        for v in violations:
            print(v)
    return 1 if violations else 0


def cmd_bench(args) -> int:
    from .bench import bench_channel, bench_primitives, format_report
    if args.bench_cmd == "primitives":
        report = bench_primitives(args.iters)
    else:
        report = bench_channel(args.msgs, args.size, args.mode)
    print(json.dumps(report, indent=2) if args.json else format_report(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    from .bench import MODES
    from .harness.scenarios import SCENARIOS
    from .protocol import MUTANTS

    p = argparse.ArgumentParser(prog="anchor", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("serve", help="run the anchor server")
    s.add_argument("--listen", required=True, metavar="ADDR:PORT")
    s.add_argument("--registry", required=True)
    s.add_argument("--policy", required=True)
    s.add_argument("--entropy-script", metavar="PATH", help="newline-delimited hex samples")
    s.add_argument("--test-mode", action="store_true", help="allow an ephemeral storage key")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("provision", help="create a device record and print its one-time key")
    s.add_argument("--device", required=True)
    s.add_argument("--kind", required=True, choices=[k.value for k in Kind])
    s.add_argument("--registry", default="anchor-registry.jsonl")
    s.add_argument("--entropy-script", metavar="PATH")
    s.add_argument("--test-mode", action="store_true")
    s.set_defaults(func=cmd_provision)

    s = sub.add_parser("attack", help="run a scripted attack scenario")
    s.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    s.add_argument("--json", action="store_true")
    s.add_argument("--encrypt", action="store_true", help="seal data frames with encryption")
    s.add_argument("--flips", type=int, default=10_000)
    s.add_argument("--forgeries", type=int, default=10_000)
    s.add_argument("--mutant", action="append", choices=sorted(MUTANTS))
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("explore", help="bounded exhaustive adversary search")
    s.add_argument("--depth", type=int, default=6)
    s.add_argument("--mutant", action="append", choices=sorted(MUTANTS))
    s.add_argument("--stop-at-first", action="store_true")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_explore)

    s = sub.add_parser("bench", help="benchmarks")
    bsub = s.add_subparsers(dest="bench_cmd", required=True)
    b = bsub.add_parser("primitives")
    b.add_argument("--iters", type=int, default=10_000)
    b.add_argument("--json", action="store_true")
    b = bsub.add_parser("channel")
    b.add_argument("--msgs", type=int, default=10_000)
    b.add_argument("--size", type=int, default=128)
    b.add_argument("--mode", choices=MODES, default="sealed")
    b.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # surface library errors as a one-line message
        from .errors import AnchorError
        if isinstance(exc, (AnchorError, OSError, ValueError)):
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
