"""Command-line interface: ``rembo {run,replay,summarize,diagnose}``.

Exit status is 0 on success, 1 for configuration errors and 2 for runtime
failures (including failed self-tests or a replay that differs).
"""

from __future__ import annotations

import argparse
import configparser
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

log = logging.getLogger("rembo")


def _on_off(value: str) -> bool:
    v = value.lower()
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return v == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rembo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a suite from a config file")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--trace-x", type=_on_off, default=None, metavar="{on,off}")

    p = sub.add_parser("replay", help="re-run one replicate of an existing run directory")
    p.add_argument("--out", required=True, type=Path, help="run directory")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--cell", action="append", help="restrict to these cells")

    p = sub.add_parser("summarize", help="recompute summary.csv from traces")
    p.add_argument("--out", required=True, type=Path, help="run directory")

    p = sub.add_parser("diagnose", help="geometry self-tests")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--D", type=int, default=5)
    p.add_argument("--samples", type=int, default=200_000, help="Monte-Carlo samples per volume")
    return parser


def _cmd_run(args) -> int:
    from .experiments import parse_suite, run_suite

    try:
        text = args.config.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc}") from None
    suite = parse_suite(text, source=str(args.config))
    if args.seed is not None:
        suite = replace(suite, base_seed=args.seed)
        # suite.ini must record the seeds actually used
        text = _override_seed(text, args.seed)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    records = run_suite(suite, args.out, config_text=text, jobs=args.jobs, trace_x=args.trace_x)
    n_ok = sum(len(v) for v in records.values())
    n_all = len(suite.cells) * suite.replicates
    print(f"{n_ok}/{n_all} replicates completed; summary in {args.out / 'summary.csv'}")
    return EXIT_OK if n_ok == n_all else EXIT_RUNTIME


def _override_seed(text: str, seed: int) -> str:
    from .experiments import normalize_key

    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = normalize_key
    parser.read_string(text)
    if not parser.has_section("suite"):
        parser.add_section("suite")
    parser["suite"]["base_seed"] = str(seed)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _cmd_replay(args) -> int:
    from .experiments import replay

    if not (args.out / "suite.ini").exists():
        raise ConfigError(f"{args.out} is not a run directory (no suite.ini)")
    same = replay(args.out, args.seed, cell_ids=args.cell)
    for cell, ok in same.items():
        print(f"{'IDENTICAL' if ok else 'DIFFERENT'} {cell} seed={args.seed}")
    return EXIT_OK if all(same.values()) else EXIT_RUNTIME


def _cmd_summarize(args) -> int:
    from .experiments import write_summary

    if not args.out.is_dir():
        raise ConfigError(f"{args.out} is not a directory")
    path = write_summary(args.out)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    from .diagnostics import run_diagnostics

    checks = run_diagnostics(d=args.d, D=args.D, seed=args.seed, n_samples=args.samples)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_RUNTIME


COMMANDS = {"run": _cmd_run, "replay": _cmd_replay, "summarize": _cmd_summarize,
            "diagnose": _cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
