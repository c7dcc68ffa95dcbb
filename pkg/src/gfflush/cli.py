"""Command-line front end: ``gfflush <mode> [flags]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .attack import ModelMismatchError
from .bench import (
    MODES,
    ConfigError,
    config_from_mapping,
    emit_results,
    emit_simulation,
    flatten_config,
    run_campaign,
    simulate,
)

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_MODEL_MISMATCH = 2
EXIT_ALL_TIMED_OUT = 3

# flag dest -> config key
_FLAG_KEYS = {
    "lam": "lambda",
    "h": "h",
    "b": "b",
    "trials": "trials",
    "rng_seed": "rng_seed",
    "cap": "cap",
    "timeout_secs": "timeout_secs",
    "taps": "taps",
    "misr_taps": "misr_taps",
    "seed": "seed",
    "workers": "workers",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment document")
    common.add_argument("--lambda", dest="lam", help="LFSR length; bench accepts a comma list")
    common.add_argument("--h", type=int, help="MISR length (number of parallel chains)")
    common.add_argument("--b", type=int, help="locking-gate spacing")
    shadow = common.add_mutually_exclusive_group()
    shadow.add_argument("--no-shadow", dest="shadow", action="store_false", default=None)
    shadow.add_argument("--shadow", dest="shadow", action="store_true", default=None)
    common.add_argument("--trials", type=int)
    common.add_argument("--rng-seed", type=int)
    common.add_argument("--cap", type=int, help="candidate enumeration cap")
    common.add_argument("--timeout-secs", type=float)
    common.add_argument("--taps", help="feedback taps c_0..c_{lambda-1} as bits, or 'random'")
    common.add_argument("--misr-taps", help="MISR taps d_0..d_{h-1} as bits, or 'all-ones'")
    common.add_argument("--seed", help="secret seed as bits, or 'random'")
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")
    common.add_argument("--quiet", action="store_true", help="no summary on stderr")

    parser = argparse.ArgumentParser(
        prog="gfflush", description="GF(2) flush attack on LFSR-obfuscated scan chains"
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sub.add_parser(mode, parents=[common])
    return parser


def load_config(args: argparse.Namespace):
    doc = {}
    if args.config is not None:
        try:
            loaded = yaml.safe_load(args.config.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError("config", str(exc)) from None
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ConfigError("config", "top level must be a mapping")
            doc = flatten_config(loaded)
    doc["mode"] = args.mode
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest)
        if value is not None:
            doc[key] = value
    if args.timeout_secs is not None and args.timeout_secs <= 0:
        doc["timeout_secs"] = None
    if args.shadow is not None:
        doc["shadow"] = args.shadow
    return config_from_mapping(doc)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
    except ConfigError as exc:
        print(f"gfflush: invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    summary = None
    try:
        if config.mode == "simulate":
            text = emit_simulation(simulate(config), args.format)
            records = []
        else:
            records, summary = run_campaign(config)
            text = emit_results(records, args.format)
    except ModelMismatchError as exc:
        print(f"gfflush: model mismatch: {exc}", file=sys.stderr)
        return EXIT_MODEL_MISMATCH

    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    if summary is not None and not args.quiet:
        print(json.dumps(summary, indent=1, default=str), file=sys.stderr)
    if records and all(r.timed_out for r in records):
        return EXIT_ALL_TIMED_OUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
