"""Command-line entry point: ``risloc {run,compare,mle,validate} <config>``."""
from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config
from .runner import compare_strategies, run_mle, run_sweep, write_outputs

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("threads must be non-negative")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="experiment YAML file")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=_u64, default=None, help="override the config seed")
    common.add_argument("--threads", type=_nonneg, default=None,
                        help="worker threads (0 = all cores; default from config)")
    parser = argparse.ArgumentParser(prog="risloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="evaluate the sweep")
    cmp_ = sub.add_parser("compare", parents=[common], help="sweep once per phase strategy")
    cmp_.add_argument("--strategies", required=True,
                      help="comma-separated list, e.g. mirror,random,proposed")
    mle = sub.add_parser("mle", parents=[common], help="Monte Carlo maximum-likelihood trials")
    mle.add_argument("--trials", type=int, default=None)
    sub.add_parser("validate", parents=[common], help="parse and check the config only")
    return parser


def _emit_error(kind: str, exc: BaseException) -> None:
    line = {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(line), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        if args.command == "validate":
            print(json.dumps({"status": "ok", "command": "validate", "points": len(cfg.points()),
                              "config_sha256": cfg.sha256()}))
            return 0
        if args.command == "run":
            result = run_sweep(cfg, args.threads)
        elif args.command == "compare":
            strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
            result = compare_strategies(cfg, strategies, args.threads)
        else:
            result = run_mle(cfg, args.trials, args.seed)
        manifest = write_outputs(result, args.out, cfg, args.command,
                                 seed=int(cfg.data["seed"]))
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        _emit_error("config", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        _emit_error("runtime", exc)
        return EXIT_RUNTIME
    print(json.dumps({"status": "ok", "command": args.command, "rows": manifest["rows"],
                      "failed_rows": manifest["failed_rows"], "out": str(args.out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
