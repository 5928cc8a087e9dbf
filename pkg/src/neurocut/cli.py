"""``neurocut`` command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .config import load_config

COMMANDS = ("generate", "sweep", "train", "evaluate", "bench", "bounds", "verify")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neurocut", description="Learned cutting-plane experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("--mode", default="td3", choices=harness.MODES, help="trainer (train/evaluate/bench)")
    ap.add_argument("--checkpoint", help="actor checkpoint path (default: <out_dir>/actor_<mode>.ckpt)")
    ap.add_argument("--workers", type=int, help="worker processes for per-instance work")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--repeats", type=int, help="bench repeats (default: bench_repeats from config)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key; may be repeated")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"neurocut: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        overrides[key.strip()] = value.strip()
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = load_config(args.config, overrides)
        cmd = args.command
        if cmd == "generate":
            return harness.cmd_generate(cfg)
        if cmd == "sweep":
            return harness.cmd_sweep(cfg)
        if cmd == "train":
            return harness.cmd_train(cfg, args.mode, args.checkpoint)
        if cmd == "evaluate":
            return harness.cmd_evaluate(cfg, args.mode, args.checkpoint)
        if cmd == "bench":
            return harness.cmd_bench(cfg, args.mode, args.checkpoint, args.repeats)
        if cmd == "bounds":
            return harness.cmd_bounds(cfg)
        return harness.cmd_verify(cfg)
    except (OSError, ValueError) as exc:
        print(f"neurocut {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
