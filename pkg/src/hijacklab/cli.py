"""Command-line interface.

Exit codes: 0 on success, 2 on config/validation errors (with the offending
field path), 3 on runtime failures (stage errors, missing artifacts).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .config import apply_seed_overrides, load_config
from .errors import ConfigError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config (YAML)")
    p.add_argument("--out", default=None, help="run directory (overrides out_dir)")
    p.add_argument(
        "--seed-override", action="append", default=[], metavar="KEY=VALUE",
        help="override one named seed; repeatable",
    )
    p.add_argument("--weights-dir", default=None, help="feature-extractor weights directory")


def _add_rundir_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("run_dir", help="completed run directory")
    p.add_argument("--weights-dir", default=None, help="feature-extractor weights directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hijacklab",
        description="config-driven model hijacking experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("train-camouflager", "train a Camouflager and persist checkpoint + trace"),
        ("hijack", "run an attack end to end into a run directory"),
        ("sweep", "one attack run per axis value, summarized as CSV"),
    ):
        _add_config_flags(sub.add_parser(name, help=helptext))
    for name, helptext in (
        ("evaluate", "recompute metrics from a run directory"),
        ("defend", "train and evaluate defenses against a run"),
        ("visualize", "emit the run's plots"),
    ):
        _add_rundir_flags(sub.add_parser(name, help=helptext))
    return parser


def _load_cfg(args):
    cfg = load_config(args.config)
    if args.seed_override:
        apply_seed_overrides(cfg, args.seed_override)
    return cfg


def _resolve_out(cfg, args) -> str:
    out = args.out if args.out is not None else cfg.out_dir
    if out is None:
        raise ConfigError("out_dir", "set out_dir in the config or pass --out")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train-camouflager":
            cfg = _load_cfg(args)
            rd = harness.run_train_camouflager(cfg, _resolve_out(cfg, args), args.weights_dir)
            print(f"camouflager checkpoint: {rd.camouflager_ckpt}")
        elif args.command == "hijack":
            cfg = _load_cfg(args)
            rd = harness.run_hijack(cfg, _resolve_out(cfg, args), args.weights_dir)
            report = json.loads(rd.report_json.read_text())
            print(f"run directory: {rd.root}")
            print(f"utility: {report['utility']}")
            print(f"asr: {report['asr']}")
        elif args.command == "sweep":
            cfg = _load_cfg(args)
            rows = harness.run_sweep(cfg, _resolve_out(cfg, args), args.weights_dir)
            for row in rows:
                print(
                    f"{row['value']}: utility={row['utility']} asr={row['asr']} "
                    f"({row['status']})"
                )
        elif args.command == "evaluate":
            out = harness.run_evaluate(args.run_dir, args.weights_dir)
            print(json.dumps(out, indent=2))
        elif args.command == "defend":
            out = harness.run_defend(args.run_dir, args.weights_dir)
            print(json.dumps(out, indent=2))
        else:  # visualize
            paths = harness.run_visualize(args.run_dir, args.weights_dir)
            for p in paths:
                print(p)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
