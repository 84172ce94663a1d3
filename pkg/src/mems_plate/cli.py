"""Command-line entry point: ``mems-plate <subcommand> --config run.cfg --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig
from .errors import MemsError, ParameterError
from .experiments import (cmd_continuation, cmd_decay, cmd_limit_study, cmd_pull_in, cmd_simulate,
                          write_json)
from .verify import LEVELS, run_verify

log = logging.getLogger("mems_plate")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

COMMANDS = {
    "simulate": lambda cfg, out, a, base: cmd_simulate(cfg, out, stride=a.stride, base_dir=base),
    "limit-study": lambda cfg, out, a, base: cmd_limit_study(cfg, out, jobs=a.jobs, base_dir=base),
    "continuation": lambda cfg, out, a, base: cmd_continuation(cfg, out, base_dir=base),
    "pull-in": lambda cfg, out, a, base: cmd_pull_in(cfg, out, base_dir=base),
    "decay": lambda cfg, out, a, base: cmd_decay(cfg, out, base_dir=base),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mems-plate", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["verify"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=name != "verify", help="key = value run file")
        sp.add_argument("--out", type=Path, help="output directory (default: output_dir from the config)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        sp.add_argument("--stride", type=int, help="snapshot/CSV row stride (overrides config)")
        sp.add_argument("--level", choices=LEVELS, default="quick", help="verify depth")
    return parser


def _load(args) -> RunConfig:
    if args.config is None:
        return RunConfig.from_text("")
    return RunConfig.from_file(args.config)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1 or (args.stride is not None and args.stride < 1):
        print("error: --jobs and --stride must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args)
    except (ParameterError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.get("output_dir"))

    if args.command == "verify":
        report = run_verify(args.level)
        for c in report.checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  ({c.seconds:.2f}s)  {c.detail}")
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "verify.json", report.as_dict())
        print(f"verify {args.level}: {'PASS' if report.passed else 'FAIL'}")
        return EXIT_OK if report.passed else EXIT_FAIL

    base = args.config.resolve().parent
    try:
        summary = COMMANDS[args.command](cfg, out, args, base)
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    status = summary.get("status") or summary.get("termination") or "done"
    print(f"{args.command}: {status} -> {out}")
    if "passed" in summary and not summary["passed"]:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
