"""Command-line front end.

Subcommands:
  run        simulate one scenario, emit a one-row CSV
  sweep      run a preset experiment grid, emit the full CSV
  summarize  aggregate a sweep CSV into per-point stats and pass/fail flags
  trace      simulate one scenario with event tracing, emit JSON lines

Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import ConfigError, ScenarioConfig, load, validate
from .sweeps import (
    PRESET_NAMES,
    execute_scenario,
    make_preset,
    read_csv,
    run_sweep,
    summarize,
    write_csv,
    _result_row,
)


class _Parser(argparse.ArgumentParser):
    # usage problems are validation errors: exit 1, not argparse's default 2
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="dmrfsim",
        description="Deterministic simulator for DMRF real-time fault-tolerant routing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario")
    p_run.add_argument("--config", required=True, help="JSON scenario file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="CSV output path (default stdout)")

    p_sweep = sub.add_parser("sweep", help="run a preset experiment grid")
    p_sweep.add_argument("--config", default=None, help="JSON base scenario file")
    p_sweep.add_argument("--preset", required=True, choices=list(PRESET_NAMES))
    p_sweep.add_argument("--out", required=True, help="CSV output path")

    p_sum = sub.add_parser("summarize", help="aggregate a sweep CSV")
    p_sum.add_argument("--in", dest="infile", required=True, help="sweep CSV path")

    p_trace = sub.add_parser("trace", help="simulate with full event tracing")
    p_trace.add_argument("--config", required=True, help="JSON scenario file")
    p_trace.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_trace.add_argument("--out", required=True, help="JSON-lines output path")
    return parser


def _load_config(path: str | None, seed: int | None) -> ScenarioConfig:
    cfg = load(path) if path is not None else ScenarioConfig()
    if seed is not None:
        cfg = validate(dataclasses.replace(cfg, seed=seed))
    return cfg


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, args.seed)
    result = execute_scenario(cfg, cfg.seed)
    rows = [_result_row("", "", cfg.protocol, 0, cfg.seed, result)]
    if args.out is None:
        write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_csv(rows, fh)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    base = _load_config(args.config, None)
    spec = make_preset(args.preset, base)
    rows = run_sweep(spec)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_csv(rows, fh)
    print(f"{len(rows)} runs -> {args.out}")
    return 0


def _cmd_summarize(args: argparse.Namespace) -> int:
    try:
        with open(args.infile, "r", encoding="utf-8", newline="") as fh:
            rows = read_csv(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.infile}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{args.infile} holds no result rows")
    sys.stdout.write(summarize(rows))
    return 0


def _cmd_trace(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, args.seed)
    result = execute_scenario(cfg, cfg.seed, collect_trace=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        for event in result.trace:
            fh.write(
                json.dumps(
                    {
                        "t": event.time,
                        "seq": event.seq,
                        "kind": event.kind,
                        "node": event.node,
                        "packet": event.packet,
                    }
                )
            )
            fh.write("\n")
    print(f"{len(result.trace)} events -> {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    commands = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "summarize": _cmd_summarize,
        "trace": _cmd_trace,
    }
    try:
        return commands[args.command](args)
    except ConfigError as exc:
        print(f"dmrfsim: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - a failed run must not look like success
        print(f"dmrfsim: runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
