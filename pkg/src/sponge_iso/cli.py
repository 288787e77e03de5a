"""Command-line entry point.

Settings are layered: built-in defaults, then the ``--config`` file, then
command-line flags (``--d``, ``--n``, ``--k``, ``--geometry``, ``--seed``,
``--precision``, ``--out`` and repeated ``--param key=value``).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .report import (EXIT_CONFIG, TASKS, ConfigError, config_error_bundle, parse_config, run)


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, val = text.split("=", 1)
    return key.strip(), _value(val)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--out", type=Path, help="output directory (default: config output_dir or ./out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", type=int, help="decimal digits for certified intervals")
    p.add_argument("--d", type=int, help="dimension")
    p.add_argument("--n", help="comma-separated subdivision ratios, e.g. 3,5,7")
    p.add_argument("--k", type=int, help="level (default: len(n))")
    p.add_argument("--geometry", choices=["cube", "full", "triangle"])
    p.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE",
                   help="task parameter; VALUE is parsed as JSON when possible")
    p.add_argument("--quiet", action="store_true", help="do not echo the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sponge-iso", description="Exact experiments on Sierpinski pre-sponges.")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run every task listed in the config"))
    for name in TASKS:
        _common(sub.add_parser(name, help=f"run the {name} task"))
    return parser


def merged_config(args: argparse.Namespace) -> dict:
    data: dict = {}
    if args.config is not None:
        data = json.loads(args.config.read_text())
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object", "<root>")
    sponge = dict(data.get("sponge", {}))
    for key in ("d", "k", "geometry"):
        if getattr(args, key) is not None:
            sponge[key] = getattr(args, key)
    if args.n is not None:
        try:
            sponge["n"] = [int(v) for v in args.n.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--n must be comma-separated integers, got {args.n!r}", "sponge.n") from None
    if sponge:
        data["sponge"] = sponge
    for key in ("seed", "precision"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if args.out is not None:
        data["output_dir"] = str(args.out)
    if args.command != "run":
        # keep config params for this task, if any, then apply --param
        params = {}
        for t in data.get("tasks", []):
            if isinstance(t, dict) and t.get("name") == args.command:
                params.update(t.get("params", {}))
        params.update(dict(args.param))
        data["tasks"] = [{"name": args.command, "params": params}]
    elif args.param:
        raise ConfigError("--param applies to single-task subcommands, not run", "param")
    return data


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out) if args.out is not None else Path("out")
    try:
        data = merged_config(args)
        cfg = parse_config(data)
    except (ConfigError, json.JSONDecodeError, OSError) as err:
        if not isinstance(err, ConfigError):
            err = ConfigError(f"cannot read config: {err}", "config")
        bundle = config_error_bundle(err)
        bundle.write(out_dir)
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    bundle = run(cfg)
    bundle.write(Path(cfg.output_dir))
    if not args.quiet:
        sys.stdout.write(bundle.report_text())
    if bundle.error is not None:
        print(f"{bundle.error.get('kind')}: {bundle.error.get('message')}", file=sys.stderr)
    return bundle.exit_code


if __name__ == "__main__":
    sys.exit(main())
